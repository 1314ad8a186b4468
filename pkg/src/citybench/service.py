"""HTTP simulation service: sessions, observations, actions, clock control.

Request handlers run on the ThreadingHTTPServer pool.  Every world mutation
and every session-table touch happens under one lock; observation rendering
works on the immutable per-tick snapshot outside the lock, so slow renders
never stall the clock or other clients.
"""

from __future__ import annotations

import base64
import json
import logging
import math
import mimetypes
import re
import secrets
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import urlparse, parse_qs

from . import raster, sensing
from .config import ServiceConfig, build_scene, make_roster
from .engine import (
    BadCommandError,
    ControlCommand,
    KindMismatchError,
    UnknownAgentError,
    World,
)

log = logging.getLogger("citybench.service")

IDEMPOTENCY_WINDOW = 10.0  # seconds a duplicate key returns the original ack
TOKEN_HEADER = "X-Session-Token"
IDEMPOTENCY_HEADER = "X-Idempotency-Key"


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


@dataclass
class Session:
    session_id: str
    agent_id: str
    created_at: float
    last_seen: float


def _json_bytes(doc) -> bytes:
    return (json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n").encode()


def encode_raster(name: str, array) -> dict:
    if name == "color":
        png = raster.encode_rgb8(array)
    else:
        png = raster.encode_gray16(array)
    h, w = array.shape[:2]
    doc = {"png_b64": base64.b64encode(png).decode("ascii"),
           "width": w, "height": h,
           "encoding": "rgb8-png" if name == "color" else "gray16-png"}
    if name == "depth":
        doc["units"] = "millimeters"
        doc["saturation"] = 65535
    return doc


def encode_lidar(scan) -> dict:
    pts = scan.points
    return {
        "points_b64": base64.b64encode(pts.tobytes(order="C")).decode("ascii"),
        "count": int(pts.shape[0]),
        "dtype": "float32",
        "frame": "body",
        "rings": scan.rings,
        "max_range": scan.max_range,
    }


class SimService:
    """Protocol semantics, independent of the HTTP plumbing."""

    def __init__(self, config: ServiceConfig, scene=None):
        self.config = config
        self.scene = scene if scene is not None else build_scene(config)
        roster = make_roster(self.scene, config.drones, config.vehicles)
        self.world = World(self.scene, config.seed, roster,
                           vehicles_per_km=config.vehicles_per_km,
                           pedestrians_per_km=config.pedestrians_per_km,
                           clock_mode=config.clock)
        self.camera = sensing.CameraModel(
            width=config.camera_width, height=config.camera_height,
            horizontal_fov=math.radians(config.camera_hfov_deg))
        self._lock = threading.RLock()
        self._sessions: dict[str, Session] = {}
        self._by_agent: dict[str, str] = {}
        self._idem: dict[tuple, tuple] = {}
        self._now = time.monotonic
        self._stop_realtime = threading.Event()
        self._realtime_thread = None
        if config.clock == "realtime":
            self._realtime_thread = threading.Thread(
                target=self._realtime_loop, name="sim-clock", daemon=True)
            self._realtime_thread.start()

    # -- internals -------------------------------------------------------------

    def _realtime_loop(self):
        dt = self.world.clock.step_dt
        next_t = time.monotonic()
        while not self._stop_realtime.is_set():
            next_t += dt
            with self._lock:
                self.world.step(1)
            delay = next_t - time.monotonic()
            if delay > 0:
                self._stop_realtime.wait(delay)
            else:
                next_t = time.monotonic()  # fell behind; don't burst

    def close(self):
        self._stop_realtime.set()
        if self._realtime_thread is not None:
            self._realtime_thread.join(timeout=2.0)

    def _sweep(self, now: float):
        dead = [t for t, s in self._sessions.items()
                if now - s.last_seen > self.config.idle_timeout]
        for t in dead:
            s = self._sessions.pop(t)
            self._by_agent.pop(s.agent_id, None)
        cold = [k for k, (ts, _) in self._idem.items()
                if now - ts > IDEMPOTENCY_WINDOW]
        for k in cold:
            del self._idem[k]

    def _auth(self, token: str | None) -> Session:
        if not token:
            raise ApiError(401, "missing_token", f"{TOKEN_HEADER} header required")
        now = self._now()
        self._sweep(now)
        sess = self._sessions.get(token)
        if sess is None:
            raise ApiError(401, "invalid_token", "unknown or expired session token")
        sess.last_seen = now
        return sess

    # -- endpoints ---------------------------------------------------------------

    def acquire(self, doc: dict) -> dict:
        kind = doc.get("agent_kind")
        if kind not in ("drone", "vehicle"):
            raise ApiError(400, "unknown_kind", "agent_kind must be 'drone' or 'vehicle'")
        with self._lock:
            self._sweep(self._now())
            for spec in sorted(self.world.roster, key=lambda a: a.agent_id):
                if spec.kind != kind or spec.agent_id in self._by_agent:
                    continue
                token = secrets.token_hex(16)
                now = self._now()
                self._sessions[token] = Session(token, spec.agent_id, now, now)
                self._by_agent[spec.agent_id] = token
                st = self.world.snapshot().agents[spec.agent_id]
                return {"session_id": token, "agent_id": spec.agent_id,
                        "spawn_pose": {"position": list(st.position),
                                       "yaw": st.attitude[2]}}
            raise ApiError(409, "no_idle_agent", f"no idle {kind} available")

    def release(self, token: str | None) -> dict:
        with self._lock:
            sess = self._sessions.pop(token, None) if token else None
            if sess is None:
                return {"released": None}
            self._by_agent.pop(sess.agent_id, None)
            return {"released": sess.agent_id}

    def roster(self) -> dict:
        with self._lock:
            self._sweep(self._now())
            snap = self.world.snapshot()
            agents = []
            for spec in sorted(self.world.roster, key=lambda a: a.agent_id):
                st = snap.agents[spec.agent_id]
                agents.append({"agent_id": spec.agent_id, "kind": spec.kind,
                               "idle": spec.agent_id not in self._by_agent,
                               "position": list(st.position)})
        return {"agents": agents, "max_agents": self.config.max_agents}

    def observation(self, agent_id: str, sensors: list[str]) -> dict:
        with self._lock:
            snap = self.world.snapshot()
        if agent_id not in snap.agents:
            raise ApiError(404, "unknown_agent", f"no agent {agent_id!r}")
        try:
            bundle = sensing.observe(snap, agent_id, sensors, camera=self.camera,
                                     imu_sigma=self.config.imu_sigma,
                                     seed=self.world.seed)
        except sensing.SensorError as e:
            raise ApiError(400, "unknown_sensor", str(e)) from e
        doc = {"agent_id": agent_id, "tick_count": snap.tick_count,
               "sim_time": snap.sim_time}
        for key, value in bundle.items():
            if key in ("depth", "segmentation", "color"):
                doc[key] = encode_raster(key, value)
            elif key == "lidar":
                doc[key] = encode_lidar(value)
            else:
                doc[key] = value
        return doc

    def action(self, token: str | None, agent_id: str, doc: dict,
               idem_key: str | None) -> dict:
        with self._lock:
            sess = self._auth(token)
            if agent_id not in self.world.agents:
                raise ApiError(404, "unknown_agent", f"no agent {agent_id!r}")
            if sess.agent_id != agent_id:
                raise ApiError(401, "foreign_token", "session does not own this agent")
            if idem_key is not None:
                cached = self._idem.get((agent_id, idem_key))
                if cached is not None and self._now() - cached[0] <= IDEMPOTENCY_WINDOW:
                    return cached[1]
            if not isinstance(doc, dict) or not isinstance(doc.get("type"), str):
                raise ApiError(422, "malformed_command", "body needs a string 'type'")
            value = doc.get("value", doc.get("v"))
            try:
                self.world.apply_command(agent_id, ControlCommand(doc["type"], value))
            except KindMismatchError as e:
                raise ApiError(409, "kind_mismatch", str(e)) from e
            except (BadCommandError, ValueError) as e:
                raise ApiError(422, "malformed_command", str(e)) from e
            except UnknownAgentError as e:
                raise ApiError(404, "unknown_agent", str(e)) from e
            ack = {"accepted_tick": self.world.clock.tick_count}
            if idem_key is not None:
                self._idem[(agent_id, idem_key)] = (self._now(), ack)
            return ack

    def step(self, token: str | None, doc: dict) -> dict:
        with self._lock:
            self._auth(token)
            if self.world.clock.mode != "lockstep":
                raise ApiError(409, "wrong_clock_mode", "stepping needs lockstep mode")
            ticks = doc.get("ticks", 1)
            if not isinstance(ticks, int) or ticks < 1 or ticks > 100000:
                raise ApiError(422, "malformed_command", "ticks must be an int in [1, 100000]")
            self.world.step(ticks)
            return {"tick_count": self.world.clock.tick_count,
                    "sim_time": self.world.clock.sim_time}

    def clock(self) -> dict:
        with self._lock:
            c = self.world.clock
            return {"mode": c.mode, "tick_count": c.tick_count,
                    "sim_time": c.sim_time, "step_dt": c.step_dt}

    def reset(self, token: str | None, doc: dict) -> dict:
        with self._lock:
            self._auth(token)
            seed = doc.get("seed")
            if seed is not None and not isinstance(seed, int):
                raise ApiError(422, "malformed_command", "seed must be an integer")
            overrides = None
            raw = doc.get("spawn")
            if raw is not None:
                if not isinstance(raw, dict):
                    raise ApiError(422, "malformed_command", "spawn must map agent ids to poses")
                overrides = {}
                for aid, pose in raw.items():
                    if aid not in self.world.agents:
                        raise ApiError(404, "unknown_agent", f"no agent {aid!r}")
                    try:
                        pos = tuple(float(c) for c in pose["position"])
                        yaw = float(pose.get("yaw", 0.0))
                        if len(pos) != 3:
                            raise ValueError
                    except (KeyError, TypeError, ValueError):
                        raise ApiError(422, "malformed_command",
                                       f"bad spawn pose for {aid!r}") from None
                    overrides[aid] = (pos, yaw)
            self.world.reset(seed, spawn_overrides=overrides)
            return {"tick_count": 0, "sim_time": 0.0, "seed": self.world.seed}


# -- HTTP layer -------------------------------------------------------------------

_ROUTES = [
    ("POST", re.compile(r"^/v1/sessions$"), "acquire"),
    ("DELETE", re.compile(r"^/v1/sessions$"), "release"),
    ("GET", re.compile(r"^/v1/agents$"), "roster"),
    ("GET", re.compile(r"^/v1/agents/([^/]+)/observation$"), "observation"),
    ("POST", re.compile(r"^/v1/agents/([^/]+)/action$"), "action"),
    ("POST", re.compile(r"^/v1/sim/step$"), "step"),
    ("GET", re.compile(r"^/v1/sim/clock$"), "clock"),
    ("POST", re.compile(r"^/v1/sim/reset$"), "reset"),
]


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    service: SimService = None  # set by make_server

    def log_message(self, fmt, *args):
        log.debug("%s %s", self.address_string(), fmt % args)

    def _send(self, status: int, body: bytes, content_type="application/json"):
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_json(self, status: int, doc):
        self._send(status, _json_bytes(doc))

    def _send_error_doc(self, e: ApiError):
        self._send_json(e.status, {"error": {"code": e.code, "message": e.message}})

    def _body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        if length == 0:
            return {}
        raw = self.rfile.read(length)
        try:
            doc = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            raise ApiError(422, "malformed_body", "body must be UTF-8 JSON") from None
        if not isinstance(doc, dict):
            raise ApiError(422, "malformed_body", "body must be a JSON object")
        return doc

    def _dispatch(self, method: str):
        url = urlparse(self.path)
        if method == "GET" and (url.path == "/console" or url.path.startswith("/console/")):
            return self._serve_console(url.path)
        for m, pattern, name in _ROUTES:
            if m != method:
                continue
            match = pattern.match(url.path)
            if not match:
                continue
            return getattr(self, "_ep_" + name)(url, match)
        raise ApiError(404, "no_route", f"no endpoint {method} {url.path}")

    def _ep_acquire(self, url, match):
        self._send_json(200, self.service.acquire(self._body()))

    def _ep_release(self, url, match):
        token = self.headers.get(TOKEN_HEADER)
        self._send_json(200, self.service.release(token))

    def _ep_roster(self, url, match):
        self._send_json(200, self.service.roster())

    def _ep_observation(self, url, match):
        qs = parse_qs(url.query)
        raw = qs.get("sensors", ["state"])[-1]
        sensors = [s for s in raw.split(",") if s]
        self._send_json(200, self.service.observation(match.group(1), sensors))

    def _ep_action(self, url, match):
        token = self.headers.get(TOKEN_HEADER)
        idem = self.headers.get(IDEMPOTENCY_HEADER)
        self._send_json(200, self.service.action(token, match.group(1), self._body(), idem))

    def _ep_step(self, url, match):
        token = self.headers.get(TOKEN_HEADER)
        self._send_json(200, self.service.step(token, self._body()))

    def _ep_clock(self, url, match):
        self._send_json(200, self.service.clock())

    def _ep_reset(self, url, match):
        token = self.headers.get(TOKEN_HEADER)
        self._send_json(200, self.service.reset(token, self._body()))

    def _serve_console(self, path: str):
        root = self.service.config.console_dir
        if not root:
            raise ApiError(404, "no_console", "console assets not configured")
        rel = path[len("/console"):].lstrip("/") or "index.html"
        base = Path(root).resolve()
        target = (base / rel).resolve()
        if not str(target).startswith(str(base)) or not target.is_file():
            raise ApiError(404, "no_route", f"no console asset {rel!r}")
        ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
        self._send(200, target.read_bytes(), content_type=ctype)

    def _handle(self, method: str):
        try:
            self._dispatch(method)
        except ApiError as e:
            self._send_error_doc(e)
        except Exception:
            log.exception("unhandled error for %s %s", method, self.path)
            self._send_json(500, {"error": {"code": "internal",
                                            "message": "internal server error"}})

    def do_GET(self):
        self._handle("GET")

    def do_POST(self):
        self._handle("POST")

    def do_DELETE(self):
        self._handle("DELETE")


def make_server(service: SimService) -> ThreadingHTTPServer:
    handler = type("Handler", (_Handler,), {"service": service})
    server = ThreadingHTTPServer((service.config.host, service.config.port), handler)
    server.daemon_threads = True
    return server


def serve_forever(config: ServiceConfig):
    service = SimService(config)
    server = make_server(service)
    log.info("serving on %s:%s (%s clock)", config.host, server.server_address[1],
             config.clock)
    try:
        server.serve_forever()
    finally:
        service.close()
        server.server_close()
