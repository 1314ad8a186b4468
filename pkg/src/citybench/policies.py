"""Built-in benchmark policies: oracle, random, replay, external HTTP.

A policy declares the sensor set it needs per decision and returns either a
wire-format command document or STOP.  Text-task policies answer prompts
instead of moving.
"""

from __future__ import annotations

import json
import math
import urllib.request

from . import rng

STOP = "STOP"


class PolicyError(Exception):
    pass


class Policy:
    """Base contract; subclasses override decide() and/or answer()."""

    sensors: tuple = ("state",)

    def begin(self, case) -> None:
        """Called once before an episode starts."""

    def decide(self, observation: dict, prompt: str):
        raise PolicyError(f"{type(self).__name__} cannot drive an agent")

    def answer(self, case, panorama: list[dict]) -> str:
        raise PolicyError(f"{type(self).__name__} cannot answer text prompts")


class OraclePolicy(Policy):
    """Follows the episode's reference waypoints; answers with ground truth.

    Waypoint switch radius stays under the free-cell clearance of the
    planner's path, so the follower never cuts a corner into geometry.
    """

    sensors = ("state",)
    advance_radius = 0.6
    stop_radius = 1.0
    cruise = 5.0

    def __init__(self):
        self._waypoints = []
        self._idx = 0
        self._case = None

    def begin(self, case) -> None:
        self._case = case
        self._waypoints = list(getattr(case, "reference_waypoints", ()) or ())
        self._idx = min(1, max(0, len(self._waypoints) - 1))

    def decide(self, observation: dict, prompt: str):
        if not self._waypoints:
            return STOP
        pos = observation["state"]["position"]
        goal = self._waypoints[-1]
        if math.dist(pos, goal) <= self.stop_radius:
            return STOP
        wp = self._waypoints[self._idx]
        while (self._idx < len(self._waypoints) - 1
               and math.dist(pos, wp) <= self.advance_radius):
            self._idx += 1
            wp = self._waypoints[self._idx]
        return {"type": "target_position", "value": [wp[0], wp[1], wp[2]]}

    def answer(self, case, panorama: list[dict]) -> str:
        return case.ground_truth["text"]


class RandomPolicy(Policy):
    """Uniform random velocity setpoints; a statistical floor, not a baseline."""

    sensors = ("state",)

    def __init__(self, seed: int = 0):
        self.seed = seed
        self._r = rng.stream(seed, "policy.random")

    def begin(self, case) -> None:
        self._r = rng.stream(self.seed, f"policy.random.{case.case_id}")

    def decide(self, observation: dict, prompt: str):
        r = self._r
        theta = r.uniform(-math.pi, math.pi)
        speed = r.uniform(0.0, 5.0)
        return {"type": "target_velocity",
                "value": [speed * math.cos(theta), speed * math.sin(theta), 0.0]}

    def answer(self, case, panorama: list[dict]) -> str:
        return "I cannot tell."


class ReplayPolicy(Policy):
    """Re-issues recorded commands on the recorded tick schedule, per case."""

    sensors = ("state",)

    def __init__(self, logs):
        """logs: iterable of episode-log dicts (as written by the runner)."""
        self._by_case = {log["case_id"]: log for log in logs}
        self._actions: dict = {}
        self._stop_tick = None
        self._response = None

    def begin(self, case) -> None:
        log = self._by_case.get(case.case_id)
        if log is None:
            raise PolicyError(f"no recorded log for case {case.case_id!r}")
        self._actions = {a["tick"]: a["command"] for a in log.get("actions", [])}
        self._stop_tick = log.get("stop_tick")
        self._response = log.get("response_text")

    def decide(self, observation: dict, prompt: str):
        tick = observation["tick_count"]
        if self._stop_tick is not None and tick >= self._stop_tick:
            return STOP
        return self._actions.get(tick)

    def answer(self, case, panorama: list[dict]) -> str:
        return self._response or ""


class ExternalPolicy(Policy):
    """Bridges to an HTTP policy endpoint (how an LLM agent plugs in).

    POST {case_id, family, prompt, observation} and expect one of
    {"command": {...}}, {"stop": true}, or {"answer": "..."}.
    """

    def __init__(self, endpoint: str, sensors: tuple = ("state",),
                 timeout: float = 30.0, retries: int = 3):
        self.endpoint = endpoint
        self.sensors = tuple(sensors)
        self.timeout = timeout
        self.retries = retries
        self._case = None

    def begin(self, case) -> None:
        self._case = case

    def _post(self, doc: dict) -> dict:
        body = json.dumps(doc, sort_keys=True).encode()
        last = None
        for _ in range(self.retries):
            try:
                req = urllib.request.Request(
                    self.endpoint, data=body,
                    headers={"Content-Type": "application/json"})
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    return json.loads(resp.read().decode())
            except Exception as e:  # transport errors abort the episode
                last = e
        raise PolicyError(f"policy endpoint unreachable: {last}")

    def _payload(self, prompt: str, observation) -> dict:
        case = self._case
        return {
            "case_id": getattr(case, "case_id", None),
            "family": getattr(case, "family", "vln"),
            "prompt": prompt,
            "observation": observation,
        }

    def decide(self, observation: dict, prompt: str):
        reply = self._post(self._payload(prompt, observation))
        if reply.get("stop"):
            return STOP
        cmd = reply.get("command")
        if cmd is None:
            raise PolicyError("policy reply carries neither command nor stop")
        return cmd

    def answer(self, case, panorama: list[dict]) -> str:
        reply = self._post(self._payload(case.prompt_text, panorama))
        if "answer" not in reply:
            raise PolicyError("policy reply carries no answer")
        return str(reply["answer"])


def make_policy(spec: str, seed: int = 0) -> Policy:
    """Parse '--policy' values: oracle | random | replay:<file> | external:<url>."""
    if spec == "oracle":
        return OraclePolicy()
    if spec == "random":
        return RandomPolicy(seed)
    if spec.startswith("replay:"):
        path = spec.split(":", 1)[1]
        with open(path) as f:
            logs = [json.loads(line) for line in f if line.strip()]
        return ReplayPolicy(logs)
    if spec.startswith("external:"):
        return ExternalPolicy(spec.split(":", 1)[1])
    raise PolicyError(f"unknown policy spec {spec!r}")
