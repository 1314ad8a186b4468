"""Episode execution against the HTTP service, plus episode-log persistence.

The runner is a pure protocol client: it never touches engine internals, so
external policies see exactly the same world a bundled policy does.  Logs are
append-only JSONL, one document per episode, replayable bit-exactly under the
same seed.
"""

from __future__ import annotations

import json
import math
import urllib.error
import urllib.request
from dataclasses import dataclass, field

from .metrics.nav import EpisodeResult
from .policies import STOP, Policy, PolicyError
from .sensing import PANORAMA_VIEWS

TRANSPORT_RETRIES = 3


class TransportError(Exception):
    pass


@dataclass
class EpisodeLimits:
    max_ticks: int = 2400
    max_collisions: int = 10
    steps_per_decision: int = 5


@dataclass
class EpisodeLog:
    case_id: str
    agent_id: str
    seed: int
    trace: list = field(default_factory=list)  # [tick, x, y, z] per tick
    actions: list = field(default_factory=list)  # {"tick", "command"}
    observed_sensors: list = field(default_factory=list)
    response_text: str | None = None
    termination: str = "incomplete"
    stop_tick: int | None = None
    collisions: int = 0
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "agent_id": self.agent_id,
            "seed": self.seed,
            "trace": self.trace,
            "actions": self.actions,
            "observed_sensors": self.observed_sensors,
            "response_text": self.response_text,
            "termination": self.termination,
            "stop_tick": self.stop_tick,
            "collisions": self.collisions,
            "error": self.error,
        }

    def traveled_length(self) -> float:
        total = 0.0
        for a, b in zip(self.trace, self.trace[1:]):
            total += math.dist(a[1:4], b[1:4])
        return total

    def final_position(self) -> tuple:
        if not self.trace:
            raise ValueError("empty episode trace")
        return tuple(self.trace[-1][1:4])


class HttpSimClient:
    """Minimal stdlib client for the simulation protocol."""

    def __init__(self, base_url: str, timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.token: str | None = None
        self.agent_id: str | None = None

    def _call(self, method: str, path: str, body=None, retries=TRANSPORT_RETRIES,
              extra_headers=None):
        data = None
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["X-Session-Token"] = self.token
        if extra_headers:
            headers.update(extra_headers)
        if body is not None:
            data = json.dumps(body, sort_keys=True).encode()
        last = None
        for _ in range(retries):
            req = urllib.request.Request(self.base_url + path, data=data,
                                         method=method, headers=headers)
            try:
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    return json.loads(resp.read().decode())
            except urllib.error.HTTPError as e:
                # protocol-level failure: deterministic, do not retry
                detail = e.read().decode(errors="replace")
                raise TransportError(f"{method} {path} -> {e.code}: {detail}") from e
            except (urllib.error.URLError, OSError, TimeoutError) as e:
                last = e
        raise TransportError(f"{method} {path} unreachable after "
                             f"{retries} attempts: {last}")

    def acquire(self, kind: str) -> dict:
        doc = self._call("POST", "/v1/sessions", {"agent_kind": kind})
        self.token = doc["session_id"]
        self.agent_id = doc["agent_id"]
        return doc

    def release(self) -> None:
        if self.token:
            self._call("DELETE", "/v1/sessions")
            self.token = None
            self.agent_id = None

    def observe(self, sensors) -> dict:
        q = ",".join(sensors)
        return self._call("GET", f"/v1/agents/{self.agent_id}/observation?sensors={q}")

    def act(self, command: dict, idempotency_key: str | None = None) -> dict:
        extra = {"X-Idempotency-Key": idempotency_key} if idempotency_key else None
        return self._call("POST", f"/v1/agents/{self.agent_id}/action", command,
                          extra_headers=extra)

    def step(self, ticks: int = 1) -> dict:
        return self._call("POST", "/v1/sim/step", {"ticks": ticks})

    def reset(self, seed: int | None = None, spawn: dict | None = None) -> dict:
        body: dict = {}
        if seed is not None:
            body["seed"] = seed
        if spawn is not None:
            body["spawn"] = spawn
        return self._call("POST", "/v1/sim/reset", body)

    def clock(self) -> dict:
        return self._call("GET", "/v1/sim/clock")

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        try:
            self.release()
        except TransportError:
            pass


def _spawn_doc(pose: dict) -> dict:
    return {"position": list(pose["position"]), "yaw": pose.get("yaw", 0.0)}


def run_episode(client: HttpSimClient, episode, policy: Policy, seed: int,
                limits: EpisodeLimits | None = None) -> EpisodeLog:
    """Drive one VLN episode: observe, decide, act, step, tick by tick."""
    limits = limits or EpisodeLimits()
    log = EpisodeLog(case_id=episode.case_id, agent_id=client.agent_id, seed=seed)
    prompt = getattr(episode, "instruction", "")
    try:
        client.reset(seed, spawn={client.agent_id: _spawn_doc(episode.start_pose)})
        policy.begin(episode)
        obs = client.observe(policy.sensors)
        log.observed_sensors.append(list(policy.sensors))
        tick = obs["tick_count"]
        log.trace.append([tick, *obs["state"]["position"]])
        while tick < limits.max_ticks:
            if tick % limits.steps_per_decision == 0:
                decision = policy.decide(obs, prompt)
                if decision == STOP:
                    log.termination = "stop_action"
                    log.stop_tick = tick
                    break
                if decision is not None:
                    client.act(decision)
                    log.actions.append({"tick": tick, "command": decision})
            client.step(1)
            obs = client.observe(policy.sensors)
            tick = obs["tick_count"]
            log.trace.append([tick, *obs["state"]["position"]])
            if obs["state"]["collided"]:
                log.collisions += 1
                if log.collisions >= limits.max_collisions:
                    log.termination = "collision_limit"
                    break
        else:
            log.termination = "timeout"
    except (TransportError, PolicyError) as e:
        log.termination = "incomplete"
        log.error = str(e)
    return log


def collect_panorama(client: HttpSimClient, sensors=("color",)) -> list[dict]:
    """The canonical 8-yaw + nadir sweep via camera commands."""
    views = []
    for pan, tilt in PANORAMA_VIEWS:
        client.act({"type": "camera", "value": [pan, tilt]})
        client.step(1)
        doc = client.observe(list(sensors) + ["state"])
        doc["view"] = {"pan": pan, "tilt": tilt}
        views.append(doc)
    client.act({"type": "camera", "value": [0.0, 0.0]})
    return views


def run_text_case(client: HttpSimClient, case, policy: Policy, seed: int) -> EpisodeLog:
    """Text tasks: spawn at the case pose, collect the panorama, ask the policy."""
    log = EpisodeLog(case_id=case.case_id, agent_id=client.agent_id, seed=seed)
    try:
        pos = list(case.spawn_pose["position"])
        # a drone's sensor sits at its origin: place it at the canonical eye
        if client.agent_id.startswith("drone"):
            pos = [pos[0], pos[1], pos[2] + 1.7]
        client.reset(seed, spawn={client.agent_id: {"position": pos,
                                                    "yaw": case.spawn_pose.get("yaw", 0.0)}})
        policy.begin(case)
        panorama = collect_panorama(client) if case.panorama else []
        log.observed_sensors.append(["color"] if case.panorama else [])
        log.response_text = policy.answer(case, panorama)
        log.termination = "stop_action"
        obs = client.observe(("state",))
        log.trace.append([obs["tick_count"], *obs["state"]["position"]])
        log.stop_tick = obs["tick_count"]
    except (TransportError, PolicyError) as e:
        log.termination = "incomplete"
        log.error = str(e)
    return log


# -- persistence -------------------------------------------------------------------


def append_log(path, log: EpisodeLog) -> None:
    with open(path, "a") as f:
        f.write(json.dumps(log.to_dict(), sort_keys=True) + "\n")


def load_logs(path) -> list[dict]:
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


def episode_results(episodes, logs) -> list[EpisodeResult]:
    """Pair VLN episodes with their logs for the navigation metrics."""
    by_case = {log["case_id"] if isinstance(log, dict) else log.case_id:
               log for log in logs}
    results = []
    for ep in episodes:
        log = by_case.get(ep.case_id)
        if log is None:
            continue
        if isinstance(log, dict):
            trace = log["trace"]
            if not trace:
                raise ValueError(f"empty episode trace for {ep.case_id}")
            final = tuple(trace[-1][1:4])
            traveled = sum(math.dist(a[1:4], b[1:4])
                           for a, b in zip(trace, trace[1:]))
        else:
            final = log.final_position()
            traveled = log.traveled_length()
        results.append(EpisodeResult(
            episode_id=ep.case_id,
            goal=tuple(ep.goal),
            final_position=final,
            shortest_path_length=ep.shortest_path_length,
            traveled_length=traveled,
            success_radius=ep.success_radius,
        ))
    return results
