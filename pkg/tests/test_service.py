from __future__ import annotations

import base64
import json
import math
import os
import threading
import time
import urllib.error
import urllib.request
from pathlib import Path

import numpy as np

from citybench import raster
from citybench.engine import STEP_DT

GOLDEN_PATH = Path(__file__).parent / "goldens" / "service_transcript.json"
TOKEN = "X-Session-Token"
IDEM = "X-Idempotency-Key"


def raw_request(ls, method, path, body=None, headers=None):
    """(status, exact response text) including error responses."""
    data = json.dumps(body).encode() if body is not None else None
    req = urllib.request.Request(ls.base + path, data=data, method=method,
                                 headers={"Content-Type": "application/json",
                                          **(headers or {})})
    try:
        with urllib.request.urlopen(req, timeout=60) as resp:
            return resp.status, resp.read().decode()
    except urllib.error.HTTPError as e:
        return e.code, e.read().decode()


def acquire(ls, kind="drone"):
    status, doc = ls.request("POST", "/v1/sessions", {"agent_kind": kind})
    assert status == 200, doc
    return doc


# -- sessions -----------------------------------------------------------------


def test_acquire_binds_an_idle_agent(live_service_factory, small_city):
    ls = live_service_factory(scene=small_city, drones=1, vehicles=1)
    doc = acquire(ls, "drone")
    assert doc["agent_id"] == "drone-0"
    assert len(doc["session_id"]) == 32
    pose = doc["spawn_pose"]
    assert len(pose["position"]) == 3 and pose["position"][2] == 30.0

    status, roster = ls.request("GET", "/v1/agents")
    assert status == 200
    by_id = {a["agent_id"]: a for a in roster["agents"]}
    assert by_id["drone-0"]["idle"] is False
    assert by_id["vehicle-0"]["idle"] is True
    assert roster["max_agents"] == 8


def test_acquire_unknown_kind_is_400(shared_service):
    status, doc = shared_service.request("POST", "/v1/sessions", {"agent_kind": "boat"})
    assert status == 400
    assert doc["error"]["code"] == "unknown_kind"


def test_eight_agents_then_409(live_service_factory, small_city):
    ls = live_service_factory(scene=small_city, drones=4, vehicles=4)
    got = [acquire(ls, "drone")["agent_id"] for _ in range(4)]
    got += [acquire(ls, "vehicle")["agent_id"] for _ in range(4)]
    assert len(set(got)) == 8
    for kind in ("drone", "vehicle"):
        status, doc = ls.request("POST", "/v1/sessions", {"agent_kind": kind})
        assert status == 409
        assert doc["error"]["code"] == "no_idle_agent"


def test_release_frees_the_agent_for_reacquisition(live_service_factory, small_city):
    ls = live_service_factory(scene=small_city, drones=1, vehicles=0)
    first = acquire(ls, "drone")
    status, doc = ls.request("DELETE", "/v1/sessions", headers={TOKEN: first["session_id"]})
    assert status == 200 and doc == {"released": "drone-0"}

    again = acquire(ls, "drone")
    assert again["agent_id"] == "drone-0"
    assert again["session_id"] != first["session_id"]

    status, doc = ls.request("DELETE", "/v1/sessions")  # no token: a no-op
    assert status == 200 and doc == {"released": None}


def test_idle_session_expires_and_frees_agent(live_service_factory, small_city):
    ls = live_service_factory(scene=small_city, drones=1, vehicles=0, idle_timeout=300.0)
    sess = acquire(ls, "drone")
    token = sess["session_id"]

    ls.service._now = lambda: time.monotonic() + 301.0  # jump past the timeout
    status, roster = ls.request("GET", "/v1/agents")
    assert roster["agents"][0]["idle"] is True

    status, doc = ls.request("POST", "/v1/sim/step", {"ticks": 1}, headers={TOKEN: token})
    assert status == 401
    assert doc["error"]["code"] == "invalid_token"

    assert acquire(ls, "drone")["agent_id"] == "drone-0"


# -- observations --------------------------------------------------------------


def test_state_observation_has_no_image_fields(shared_service):
    status, doc = shared_service.request(
        "GET", "/v1/agents/drone-0/observation?sensors=state")
    assert status == 200
    assert doc["agent_id"] == "drone-0"
    assert doc["sim_time"] == doc["tick_count"] * STEP_DT
    st = doc["state"]
    for key in ("position", "velocity", "attitude", "camera", "collided"):
        assert key in st
    for key in ("depth", "segmentation", "color", "lidar"):
        assert key not in doc


def test_depth_observation_decodes_to_camera_dims(shared_service):
    status, doc = shared_service.request(
        "GET", "/v1/agents/drone-0/observation?sensors=depth")
    assert status == 200
    blob = doc["depth"]
    assert (blob["width"], blob["height"]) == (320, 240)
    assert blob["encoding"] == "gray16-png"
    assert blob["units"] == "millimeters"
    img = raster.decode(base64.b64decode(blob["png_b64"]))
    assert img.shape == (240, 320) and img.dtype == np.uint16


def test_lidar_observation_decodes_to_body_frame_points(shared_service):
    status, doc = shared_service.request(
        "GET", "/v1/agents/drone-0/observation?sensors=lidar")
    assert status == 200
    blob = doc["lidar"]
    pts = np.frombuffer(base64.b64decode(blob["points_b64"]), dtype=np.float32)
    assert pts.size == blob["count"] * 3
    assert blob["frame"] == "body" and blob["max_range"] == 80.0


def test_same_tick_observations_are_byte_identical(shared_service):
    path = "/v1/agents/drone-0/observation?sensors=state,gps,imu,depth,segmentation,color,lidar"
    assert shared_service.raw(path) == shared_service.raw(path)


def test_observation_errors(shared_service):
    status, doc = shared_service.request("GET", "/v1/agents/ghost/observation?sensors=state")
    assert status == 404 and doc["error"]["code"] == "unknown_agent"
    status, doc = shared_service.request("GET", "/v1/agents/drone-0/observation?sensors=sonar")
    assert status == 400 and doc["error"]["code"] == "unknown_sensor"


# -- actions ---------------------------------------------------------------------


def test_action_accepts_owned_command_and_moves_agent(live_service_factory, small_city):
    ls = live_service_factory(scene=small_city, drones=1, vehicles=0)
    token = acquire(ls, "drone")["session_id"]
    headers = {TOKEN: token}

    status, before = ls.request("GET", "/v1/agents/drone-0/observation?sensors=state")
    x0 = before["state"]["position"][0]

    status, ack = ls.request("POST", "/v1/agents/drone-0/action",
                             {"type": "target_velocity", "v": [1.0, 0.0, 0.0]},
                             headers=headers)
    assert status == 200 and ack == {"accepted_tick": 0}

    status, stepped = ls.request("POST", "/v1/sim/step", {"ticks": 40}, headers=headers)
    assert status == 200
    assert stepped == {"tick_count": 40, "sim_time": 40 * STEP_DT}

    status, after = ls.request("GET", "/v1/agents/drone-0/observation?sensors=state")
    assert after["tick_count"] == 40
    assert after["state"]["position"][0] > x0 + 1.5


def test_action_auth_matrix(live_service_factory, small_city):
    ls = live_service_factory(scene=small_city, drones=1, vehicles=1)
    drone_tok = acquire(ls, "drone")["session_id"]
    vehicle_tok = acquire(ls, "vehicle")["session_id"]
    body = {"type": "target_velocity", "v": [1.0, 0.0, 0.0]}

    status, doc = ls.request("POST", "/v1/agents/drone-0/action", body)
    assert status == 401 and doc["error"]["code"] == "missing_token"

    status, doc = ls.request("POST", "/v1/agents/drone-0/action", body,
                             headers={TOKEN: vehicle_tok})
    assert status == 401 and doc["error"]["code"] == "foreign_token"

    status, doc = ls.request("POST", "/v1/agents/nobody/action", body,
                             headers={TOKEN: drone_tok})
    assert status == 404 and doc["error"]["code"] == "unknown_agent"

    status, doc = ls.request("POST", "/v1/agents/drone-0/action", body,
                             headers={TOKEN: drone_tok})
    assert status == 200


def test_action_validation_errors(live_service_factory, small_city):
    ls = live_service_factory(scene=small_city, drones=1, vehicles=1)
    dt = acquire(ls, "drone")["session_id"]
    vt = acquire(ls, "vehicle")["session_id"]

    cases = [
        ("drone-0", dt, {"type": "throttle", "value": 0.5}, 409, "kind_mismatch"),
        ("vehicle-0", vt, {"type": "target_velocity", "v": [1, 0, 0]}, 409, "kind_mismatch"),
        ("vehicle-0", vt, {"type": "throttle", "value": 2.0}, 422, "malformed_command"),
        ("drone-0", dt, {"type": "target_velocity", "v": [1, "x", 0]}, 422, "malformed_command"),
        ("drone-0", dt, {"type": "warp", "v": [0, 0, 0]}, 422, "malformed_command"),
        ("drone-0", dt, {"no_type": 1}, 422, "malformed_command"),
    ]
    for agent, tok, body, want_status, want_code in cases:
        status, doc = ls.request("POST", f"/v1/agents/{agent}/action", body,
                                 headers={TOKEN: tok})
        assert (status, doc["error"]["code"]) == (want_status, want_code), (body, doc)


def test_idempotency_key_replays_the_original_ack(live_service_factory, small_city):
    ls = live_service_factory(scene=small_city, drones=1, vehicles=0)
    token = acquire(ls, "drone")["session_id"]
    hdr = {TOKEN: token, IDEM: "once"}
    body = {"type": "target_velocity", "v": [1.0, 0.0, 0.0]}

    status, first = ls.request("POST", "/v1/agents/drone-0/action", body, headers=hdr)
    assert first == {"accepted_tick": 0}

    ls.request("POST", "/v1/sim/step", {"ticks": 5}, headers={TOKEN: token})
    ls.request("POST", "/v1/agents/drone-0/action",
               {"type": "target_velocity", "v": [0.0, 0.0, 0.0]}, headers={TOKEN: token})

    # the duplicate must return the tick-0 ack and must NOT re-apply the command
    status, replay = ls.request("POST", "/v1/agents/drone-0/action", body, headers=hdr)
    assert replay == {"accepted_tick": 0}
    ls.request("POST", "/v1/sim/step", {"ticks": 30}, headers={TOKEN: token})
    status, obs = ls.request("GET", "/v1/agents/drone-0/observation?sensors=state")
    assert abs(obs["state"]["velocity"][0]) < 1e-9  # the zero setpoint stayed in force

    # outside the 10 s window the key is forgotten and the command re-applies
    ls.service._now = lambda: time.monotonic() + 11.0
    status, late = ls.request("POST", "/v1/agents/drone-0/action", body, headers=hdr)
    assert late == {"accepted_tick": 35}


# -- clock control ------------------------------------------------------------------


def test_step_and_clock_lockstep(live_service_factory, small_city):
    ls = live_service_factory(scene=small_city, drones=1, vehicles=0)
    token = acquire(ls, "drone")["session_id"]

    status, doc = ls.request("GET", "/v1/sim/clock")
    assert doc == {"mode": "lockstep", "tick_count": 0, "sim_time": 0.0, "step_dt": 0.05}

    status, doc = ls.request("POST", "/v1/sim/step", {"ticks": 20}, headers={TOKEN: token})
    assert doc == {"tick_count": 20, "sim_time": 1.0}

    status, doc = ls.request("POST", "/v1/sim/step", {"ticks": 0}, headers={TOKEN: token})
    assert status == 422
    status, doc = ls.request("POST", "/v1/sim/step", {"ticks": "x"}, headers={TOKEN: token})
    assert status == 422
    status, doc = ls.request("POST", "/v1/sim/step", {"ticks": 1})
    assert status == 401  # stepping mutates the world, so it needs a session


def test_step_rejected_in_realtime_mode(live_service_factory, small_city):
    ls = live_service_factory(scene=small_city, drones=1, vehicles=0, clock="realtime")
    token = acquire(ls, "drone")["session_id"]
    status, doc = ls.request("POST", "/v1/sim/step", {"ticks": 1}, headers={TOKEN: token})
    assert status == 409
    assert doc["error"]["code"] == "wrong_clock_mode"

    deadline = time.monotonic() + 5.0
    while time.monotonic() < deadline:
        status, clock = ls.request("GET", "/v1/sim/clock")
        if clock["tick_count"] > 0:
            break
        time.sleep(0.05)
    assert clock["mode"] == "realtime" and clock["tick_count"] > 0  # clock free-runs


def test_reset_restores_initial_state_and_applies_spawns(live_service_factory, small_city):
    ls = live_service_factory(scene=small_city, drones=1, vehicles=0)
    token = acquire(ls, "drone")["session_id"]
    hdr = {TOKEN: token}

    ls.request("POST", "/v1/agents/drone-0/action",
               {"type": "target_velocity", "v": [2.0, 0.0, 0.0]}, headers=hdr)
    ls.request("POST", "/v1/sim/step", {"ticks": 30}, headers=hdr)

    status, doc = ls.request("POST", "/v1/sim/reset", {"seed": 9}, headers=hdr)
    assert doc == {"tick_count": 0, "sim_time": 0.0, "seed": 9}

    status, doc = ls.request(
        "POST", "/v1/sim/reset",
        {"spawn": {"drone-0": {"position": [40.0, 40.0, 25.0], "yaw": 1.0}}}, headers=hdr)
    assert status == 200
    status, obs = ls.request("GET", "/v1/agents/drone-0/observation?sensors=state")
    assert obs["state"]["position"] == [40.0, 40.0, 25.0]
    assert obs["state"]["attitude"][2] == 1.0

    status, doc = ls.request("POST", "/v1/sim/reset", {"seed": "x"}, headers=hdr)
    assert status == 422
    status, doc = ls.request(
        "POST", "/v1/sim/reset", {"spawn": {"ghost": {"position": [0, 0, 0]}}}, headers=hdr)
    assert status == 404
    status, doc = ls.request(
        "POST", "/v1/sim/reset", {"spawn": {"drone-0": {"position": [0, 0]}}}, headers=hdr)
    assert status == 422
    status, doc = ls.request("POST", "/v1/sim/reset", {})
    assert status == 401


def test_reset_then_same_script_gives_identical_bytes(live_service_factory, small_city):
    ls = live_service_factory(scene=small_city, drones=1, vehicles=0, seed=3)
    token = acquire(ls, "drone")["session_id"]
    hdr = {TOKEN: token}
    obs_path = "/v1/agents/drone-0/observation?sensors=state,gps,imu,depth,lidar"

    def scripted_run():
        status, doc = ls.request("POST", "/v1/sim/reset", {"seed": 3}, headers=hdr)
        assert status == 200
        ls.request("POST", "/v1/agents/drone-0/action",
                   {"type": "target_velocity", "v": [1.0, 0.5, 0.2]}, headers=hdr)
        ls.request("POST", "/v1/sim/step", {"ticks": 25}, headers=hdr)
        return ls.raw(obs_path)

    assert scripted_run() == scripted_run()


# -- HTTP envelope -------------------------------------------------------------------


def test_malformed_bodies_and_routes(shared_service):
    req = urllib.request.Request(shared_service.base + "/v1/sessions",
                                 data=b"not json", method="POST",
                                 headers={"Content-Type": "application/json"})
    try:
        urllib.request.urlopen(req, timeout=30)
        raise AssertionError("expected HTTP error")
    except urllib.error.HTTPError as e:
        assert e.code == 422
        assert json.loads(e.read())["error"]["code"] == "malformed_body"

    status, doc = shared_service.request("POST", "/v1/nowhere", {})
    assert status == 404 and doc["error"]["code"] == "no_route"
    status, doc = shared_service.request("GET", "/v1/sim/step")
    assert status == 404  # wrong method for the route


def test_console_serving(live_service_factory, small_city, tmp_path):
    (tmp_path / "index.html").write_text("<html>console</html>")
    ls = live_service_factory(scene=small_city, drones=1, vehicles=0,
                              console_dir=str(tmp_path))
    assert b"console" in ls.raw("/console")
    assert b"console" in ls.raw("/console/index.html")
    status, doc = ls.request("GET", "/v1/agents")  # api still routes
    assert status == 200
    status, doc = ls.request("GET", "/console/missing.js")
    assert status == 404

    bare = live_service_factory(scene=small_city, drones=1, vehicles=0)
    status, doc = bare.request("GET", "/console")
    assert status == 404 and doc["error"]["code"] == "no_console"


# -- concurrency and determinism ------------------------------------------------------


def _expected_altitudes(z0, ticks):
    """Mirror of the drone ramp toward a (0,0,1) velocity setpoint."""
    zs = [z0]
    v = 0.0
    for _ in range(ticks):
        dv = 1.0 - v
        n = math.sqrt(dv * dv)
        limit = 5.0 * STEP_DT
        if n > limit and n != 0.0:
            dv = dv * (limit / n)
        v = v + dv
        zs.append(zs[-1] + v * STEP_DT)
    return zs


def test_concurrent_readers_see_single_tick_documents(live_service_factory, small_city):
    ls = live_service_factory(scene=small_city, drones=1, vehicles=0, seed=3,
                              camera_width=64, camera_height=48,
                              vehicles_per_km=0.0, pedestrians_per_km=0.0)
    token = acquire(ls, "drone")["session_id"]
    hdr = {TOKEN: token}
    ls.request("POST", "/v1/agents/drone-0/action",
               {"type": "camera", "value": [0.0, math.pi / 2]}, headers=hdr)
    ls.request("POST", "/v1/agents/drone-0/action",
               {"type": "target_velocity", "v": [0.0, 0.0, 1.0]}, headers=hdr)
    ls.request("POST", "/v1/sim/step", {"ticks": 1}, headers=hdr)

    zs = _expected_altitudes(30.0, 80)
    factor = math.sqrt(1.0 + 2.0 / 64.0 ** 2)  # center-pixel slant of the 64x48 frame
    errors = []
    stop = threading.Event()

    def reader():
        while not stop.is_set() and not errors:
            status, doc = ls.request(
                "GET", "/v1/agents/drone-0/observation?sensors=state,depth")
            if status != 200:
                errors.append(("status", status))
                return
            tick = doc["tick_count"]
            z = doc["state"]["position"][2]
            if abs(z - zs[tick]) > 1e-9:
                errors.append(("state vs tick tear", tick, z))
                return
            img = raster.decode(base64.b64decode(doc["depth"]["png_b64"]))
            want_mm = math.floor(z * factor * 1000.0 + 0.5)
            if abs(int(img[24, 32]) - want_mm) > 2:
                errors.append(("depth vs state tear", tick, int(img[24, 32]), want_mm))
                return

    threads = [threading.Thread(target=reader) for _ in range(8)]
    for t in threads:
        t.start()
    for _ in range(60):
        ls.request("POST", "/v1/sim/step", {"ticks": 1}, headers=hdr)
    stop.set()
    for t in threads:
        t.join(timeout=60)
    assert not errors, errors[:3]


def test_reader_threads_do_not_perturb_the_simulation(live_service_factory, small_city):
    obs_all = "/v1/agents/drone-0/observation?sensors=state,gps,imu,depth,segmentation,color,lidar"

    def run(readers):
        ls = live_service_factory(scene=small_city, drones=1, vehicles=0, seed=3,
                                  camera_width=64, camera_height=48)
        token = acquire(ls, "drone")["session_id"]
        hdr = {TOKEN: token}
        ls.request("POST", "/v1/agents/drone-0/action",
                   {"type": "target_velocity", "v": [1.0, 0.3, 0.4]}, headers=hdr)
        stop = threading.Event()

        def hammer():
            while not stop.is_set():
                ls.raw(obs_all)

        threads = [threading.Thread(target=hammer) for _ in range(readers)]
        for t in threads:
            t.start()
        for _ in range(40):
            ls.request("POST", "/v1/sim/step", {"ticks": 1}, headers=hdr)
        stop.set()
        for t in threads:
            t.join(timeout=60)
        return ls.raw(obs_all)

    assert run(0) == run(8)


# -- golden transcript ------------------------------------------------------------------

GOLDEN_CONFIG = dict(seed=3, drones=1, vehicles=1, camera_width=64, camera_height=48)

GOLDEN_SCRIPT = [
    ("GET", "/v1/agents", None, False),
    ("POST", "/v1/sessions", {"agent_kind": "drone"}, False),
    ("GET", "/v1/sim/clock", None, False),
    ("POST", "/v1/agents/drone-0/action",
     {"type": "camera", "value": [0.0, 1.5707963267948966]}, True, "gold-cam"),
    ("POST", "/v1/agents/drone-0/action",
     {"type": "target_velocity", "v": [1.0, 0.0, 0.5]}, True),
    ("POST", "/v1/sim/step", {"ticks": 10}, True),
    ("GET", "/v1/agents/drone-0/observation?sensors=state,gps,imu", None, False),
    ("GET", "/v1/agents/drone-0/observation?sensors=depth,segmentation,color,lidar",
     None, False),
    ("POST", "/v1/agents/drone-0/action",
     {"type": "camera", "value": [0.0, 1.5707963267948966]}, True, "gold-cam"),
    ("POST", "/v1/agents/drone-0/action", {"type": "throttle", "value": 0.5}, True),
    ("POST", "/v1/agents/drone-0/action",
     {"type": "target_velocity", "v": [1.0, "x", 0.0]}, True),
    ("POST", "/v1/sim/reset", {"seed": 3}, True),
    ("GET", "/v1/agents/drone-0/observation?sensors=state", None, False),
    ("DELETE", "/v1/sessions", None, True),
]


def _run_golden_script(ls):
    """Play the script, returning (status, token-normalized body) per request."""
    token = None
    out = []
    for step in GOLDEN_SCRIPT:
        method, path, body, with_token = step[:4]
        headers = {}
        if with_token:
            headers[TOKEN] = token
        if len(step) > 4:
            headers[IDEM] = step[4]
        status, text = raw_request(ls, method, path, body, headers)
        if path == "/v1/sessions" and method == "POST" and status == 200:
            token = json.loads(text)["session_id"]
        if token:
            text = text.replace(token, "$TOKEN")
        out.append({"method": method, "path": path, "status": status, "body": text})
    return out


def test_golden_transcript_replays_byte_identically(live_service_factory, small_city):
    ls = live_service_factory(scene=small_city, **GOLDEN_CONFIG)
    got = _run_golden_script(ls)
    if not GOLDEN_PATH.exists() or os.environ.get("UPDATE_GOLDENS"):
        GOLDEN_PATH.parent.mkdir(exist_ok=True)
        GOLDEN_PATH.write_text(json.dumps(got, indent=2, sort_keys=True) + "\n")
    want = json.loads(GOLDEN_PATH.read_text())
    assert len(got) == len(want)
    for g, w in zip(got, want):
        assert g == w, f"{g['method']} {g['path']} drifted from the recorded transcript"
