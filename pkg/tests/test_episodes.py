from __future__ import annotations

import dataclasses
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from citybench.episodes import (
    EpisodeLimits,
    EpisodeLog,
    HttpSimClient,
    TransportError,
    append_log,
    collect_panorama,
    episode_results,
    load_logs,
    run_episode,
    run_text_case,
)
from citybench.policies import (
    STOP,
    ExternalPolicy,
    OraclePolicy,
    Policy,
    PolicyError,
    RandomPolicy,
    ReplayPolicy,
    make_policy,
)
from citybench.sensing import PANORAMA_VIEWS
from citybench.tasks import generate_qa_cases, generate_vln_episodes

QUIET = dict(drones=1, vehicles=0, vehicles_per_km=0.0, pedestrians_per_km=0.0, seed=3)


@pytest.fixture(scope="module")
def small_episodes(small_city):
    return generate_vln_episodes(small_city, seed=4, n=4)


@pytest.fixture(scope="module")
def shortest_episode(small_episodes):
    return min(small_episodes, key=lambda e: e.shortest_path_length)


def client_for(ls) -> HttpSimClient:
    c = HttpSimClient(ls.base)
    c.acquire("drone")
    return c


# -- stub policy endpoint --------------------------------------------------------


class _StubPolicyHandler(BaseHTTPRequestHandler):
    reply: dict = {}
    calls: list = []

    def do_POST(self):
        n = int(self.headers.get("Content-Length") or 0)
        doc = json.loads(self.rfile.read(n)) if n else {}
        type(self).calls.append(doc)
        body = json.dumps(self.reply).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, fmt, *args):
        pass


@pytest.fixture
def policy_stub():
    servers = []

    def make(reply: dict):
        handler = type("Stub", (_StubPolicyHandler,), {"reply": reply, "calls": []})
        srv = ThreadingHTTPServer(("127.0.0.1", 0), handler)
        threading.Thread(target=srv.serve_forever, daemon=True).start()
        servers.append(srv)
        return f"http://127.0.0.1:{srv.server_address[1]}/decide", handler.calls

    yield make
    for srv in servers:
        srv.shutdown()
        srv.server_close()


# -- oracle end to end -------------------------------------------------------------


def test_oracle_policy_completes_an_episode(live_service_factory, small_city,
                                            shortest_episode):
    ls = live_service_factory(scene=small_city, **QUIET)
    ep = shortest_episode
    with client_for(ls) as client:
        log = run_episode(client, ep, OraclePolicy(), seed=3)

    assert log.error is None
    assert log.termination == "stop_action"
    assert log.stop_tick is not None and log.stop_tick % 5 == 0
    assert log.collisions == 0

    ticks = [row[0] for row in log.trace]
    assert ticks == list(range(len(ticks)))  # one trace row per tick, from 0
    assert log.observed_sensors == [["state"]]
    assert all(a["tick"] % 5 == 0 for a in log.actions)

    (res,) = episode_results([ep], [log])
    assert res.success
    assert res.nav_error <= 2.0
    assert res.spl >= 0.95


def test_replay_reproduces_the_trace_bit_exactly(live_service_factory, small_city,
                                                 shortest_episode):
    ep = shortest_episode
    ls1 = live_service_factory(scene=small_city, **QUIET)
    with client_for(ls1) as client:
        original = run_episode(client, ep, OraclePolicy(), seed=3)
    assert original.termination == "stop_action"

    ls2 = live_service_factory(scene=small_city, **QUIET)
    with client_for(ls2) as client:
        replayed = run_episode(client, ep, ReplayPolicy([original.to_dict()]), seed=3)

    assert replayed.trace == original.trace  # float-for-float identical
    assert replayed.stop_tick == original.stop_tick
    assert replayed.actions == original.actions
    assert replayed.termination == "stop_action"


def test_random_policy_is_a_floor_not_a_solver(live_service_factory, small_city,
                                               shortest_episode):
    ls = live_service_factory(scene=small_city, **QUIET)
    limits = EpisodeLimits(max_ticks=40)
    with client_for(ls) as client:
        log1 = run_episode(client, shortest_episode, RandomPolicy(0), seed=3,
                           limits=limits)
        log2 = run_episode(client, shortest_episode, RandomPolicy(0), seed=3,
                           limits=limits)

    assert log1.termination == "timeout"
    (res,) = episode_results([shortest_episode], [log1])
    assert not res.success
    assert [a["command"] for a in log1.actions] == [a["command"] for a in log2.actions]


def test_policy_exception_leaves_episode_incomplete(live_service_factory, small_city,
                                                    shortest_episode):
    ls = live_service_factory(scene=small_city, **QUIET)
    with client_for(ls) as client:
        log = run_episode(client, shortest_episode, Policy(), seed=3)
    assert log.termination == "incomplete"
    assert "cannot drive" in log.error


def test_unreachable_service_marks_incomplete(shortest_episode):
    client = HttpSimClient("http://127.0.0.1:1", timeout=0.5)
    client.agent_id = "drone-0"
    log = run_episode(client, shortest_episode, OraclePolicy(), seed=3)
    assert log.termination == "incomplete"
    assert "unreachable" in log.error


# -- text cases ----------------------------------------------------------------------


def test_text_case_panorama_and_oracle_answer(live_service_factory, small_city):
    ls = live_service_factory(scene=small_city, **QUIET,
                              camera_width=64, camera_height=48)
    case = generate_qa_cases(small_city, seed=2, per_subtype=1)[0]

    views = []
    with client_for(ls) as client:
        client.reset(3, spawn={client.agent_id: {"position": [10.0, 10.0, 1.7],
                                                 "yaw": 0.0}})
        views = collect_panorama(client)
        log = run_text_case(client, case, OraclePolicy(), seed=3)

    assert [v["view"] for v in views] == [{"pan": p, "tilt": t} for p, t in PANORAMA_VIEWS]
    assert all("color" in v and "state" in v for v in views)

    assert log.termination == "stop_action"
    assert log.error is None
    assert log.response_text == case.ground_truth["text"]
    assert log.stop_tick == len(PANORAMA_VIEWS)
    # the drone hovers at the canonical pedestrian eye height
    assert log.trace[-1][3] == pytest.approx(case.spawn_pose["position"][2] + 1.7)


def test_text_case_skips_panorama_when_disabled(live_service_factory, small_city):
    ls = live_service_factory(scene=small_city, **QUIET)
    case = generate_qa_cases(small_city, seed=2, per_subtype=1)[0]
    case = dataclasses.replace(case, panorama=False)
    with client_for(ls) as client:
        log = run_text_case(client, case, OraclePolicy(), seed=3)
    assert log.stop_tick == 0
    assert log.observed_sensors == [[]]


# -- external policies ----------------------------------------------------------------


def test_external_policy_stop_and_payload(live_service_factory, small_city,
                                          shortest_episode, policy_stub):
    url, calls = policy_stub({"stop": True})
    ls = live_service_factory(scene=small_city, **QUIET)
    with client_for(ls) as client:
        log = run_episode(client, shortest_episode, ExternalPolicy(url), seed=3)
    assert log.termination == "stop_action"
    assert log.stop_tick == 0
    assert log.actions == []
    payload = calls[0]
    assert payload["case_id"] == shortest_episode.case_id
    assert payload["family"] == "vln"
    assert payload["prompt"] == shortest_episode.instruction
    assert payload["observation"]["state"]["position"]


def test_external_policy_commands_are_applied(live_service_factory, small_city,
                                              shortest_episode, policy_stub):
    cmd = {"type": "target_velocity", "value": [0.0, 0.0, 0.0]}
    url, calls = policy_stub({"command": cmd})
    ls = live_service_factory(scene=small_city, **QUIET)
    with client_for(ls) as client:
        log = run_episode(client, shortest_episode, ExternalPolicy(url), seed=3,
                          limits=EpisodeLimits(max_ticks=6))
    assert log.termination == "timeout"
    assert [a["command"] for a in log.actions] == [cmd, cmd]  # decisions at ticks 0, 5


def test_external_policy_answer_and_errors(live_service_factory, small_city,
                                           policy_stub):
    case = generate_qa_cases(small_city, seed=2, per_subtype=1)[0]
    ls = live_service_factory(scene=small_city, **QUIET,
                              camera_width=64, camera_height=48)

    url, _ = policy_stub({"answer": "blue"})
    with client_for(ls) as client:
        log = run_text_case(client, case, ExternalPolicy(url), seed=3)
    assert log.response_text == "blue"

    url, _ = policy_stub({})
    with client_for(ls) as client:
        log = run_text_case(client, case, ExternalPolicy(url), seed=3)
    assert log.termination == "incomplete"
    assert "no answer" in log.error

    dead = ExternalPolicy("http://127.0.0.1:1/decide", timeout=0.3, retries=2)
    with pytest.raises(PolicyError, match="unreachable"):
        dead.decide({"state": {}}, "go")


def test_make_policy_parses_specs(tmp_path):
    assert isinstance(make_policy("oracle"), OraclePolicy)
    assert isinstance(make_policy("random", seed=9), RandomPolicy)
    assert isinstance(make_policy("external:http://127.0.0.1:9/x"), ExternalPolicy)
    assert make_policy("external:http://127.0.0.1:9/x").endpoint == "http://127.0.0.1:9/x"

    path = tmp_path / "runs.jsonl"
    append_log(path, EpisodeLog(case_id="c1", agent_id="drone-0", seed=3))
    replay = make_policy(f"replay:{path}")
    assert isinstance(replay, ReplayPolicy)
    with pytest.raises(PolicyError, match="unknown policy"):
        make_policy("llm")


def test_replay_policy_requires_a_matching_log(shortest_episode):
    policy = ReplayPolicy([])
    with pytest.raises(PolicyError, match="no recorded log"):
        policy.begin(shortest_episode)


# -- persistence and pairing -----------------------------------------------------------


def test_append_and_load_logs_round_trip(tmp_path):
    path = tmp_path / "episodes.jsonl"
    a = EpisodeLog(case_id="c1", agent_id="drone-0", seed=3,
                   trace=[[0, 0.0, 0.0, 30.0], [1, 1.0, 0.0, 30.0]],
                   actions=[{"tick": 0, "command": {"type": "stop", "value": None}}],
                   termination="stop_action", stop_tick=1)
    b = EpisodeLog(case_id="c2", agent_id="drone-0", seed=3, termination="timeout")
    append_log(path, a)
    append_log(path, b)
    docs = load_logs(path)
    assert docs == [a.to_dict(), b.to_dict()]


def test_episode_results_pairs_and_skips(small_episodes):
    ep = small_episodes[0]
    goal = ep.goal
    log = EpisodeLog(case_id=ep.case_id, agent_id="drone-0", seed=3,
                     trace=[[0, goal[0] - 9.0, goal[1], goal[2]],
                            [1, goal[0] - 3.0, goal[1], goal[2]]],
                     termination="stop_action", stop_tick=1)
    results = episode_results(small_episodes, [log])
    assert len(results) == 1  # unlogged episodes are skipped, not invented
    res = results[0]
    assert res.episode_id == ep.case_id
    assert res.goal == tuple(goal)
    assert res.traveled_length == pytest.approx(6.0)
    assert res.nav_error == pytest.approx(3.0)
    assert res.success

    dict_results = episode_results(small_episodes, [log.to_dict()])
    assert dict_results == results

    empty = EpisodeLog(case_id=ep.case_id, agent_id="drone-0", seed=3)
    with pytest.raises(ValueError, match="empty episode trace"):
        episode_results(small_episodes, [empty.to_dict()])
    with pytest.raises(ValueError, match="empty episode trace"):
        empty.final_position()
