"""Deterministic world stepping: clock, agent dynamics, collision.

Time is tick-counted (sim_time = tick_count * step_dt exactly, never a
float accumulator).  Each tick updates traffic entities by id, then agents
by id, so the trajectory is a pure function of (seed, scene, commands).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from . import geometry as geo
from .scene import SceneGraph, validate_scene

STEP_DT = 0.05

DRONE_MAX_SPEED = 15.0
DRONE_A_MAX = 5.0
DRONE_POS_KP = 1.0
DRONE_POS_V_MAX = 5.0
ATTITUDE_RATE = 1.5

VEHICLE_MAX_SPEED = 20.0
VEHICLE_MAX_REVERSE = 5.0
WHEELBASE = 2.7
WHEEL_ANGLE_MAX = 0.6
THROTTLE_GAIN = 3.0
BRAKE_GAIN = 6.0
DRAG_DECEL = 0.2

DRONE_COMMANDS = {"target_position", "target_velocity", "target_orientation", "start", "stop", "camera"}
VEHICLE_COMMANDS = {"steering", "throttle", "brake", "gear", "start", "stop", "camera"}
GEARS = ("forward", "reverse", "neutral")


class EngineError(Exception):
    pass


class UnknownAgentError(EngineError):
    pass


class KindMismatchError(EngineError):
    pass


class BadCommandError(EngineError):
    pass


@dataclass(frozen=True)
class ControlCommand:
    """One action variant; `value` shape depends on `type`."""

    type: str
    value: object = None


@dataclass
class AgentState:
    agent_id: str
    kind: str  # drone | vehicle
    position: tuple[float, float, float]
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    attitude: tuple[float, float, float] = (0.0, 0.0, 0.0)  # roll, pitch, yaw
    camera: tuple[float, float] = (0.0, 0.0)  # pan, tilt
    wheel_angle: float = 0.0
    gear: str = "forward"
    throttle: float = 0.0
    brake: float = 0.0
    armed: bool = True
    collided: bool = False

    def speed(self) -> float:
        vx, vy, vz = self.velocity
        return math.sqrt(vx * vx + vy * vy + vz * vz)


@dataclass(frozen=True)
class AgentSpec:
    agent_id: str
    kind: str
    spawn_position: tuple[float, float, float]
    spawn_yaw: float = 0.0


@dataclass
class WorldClock:
    mode: str = "lockstep"  # lockstep | realtime
    step_dt: float = STEP_DT
    tick_count: int = 0

    @property
    def sim_time(self) -> float:
        return self.tick_count * self.step_dt


@dataclass(frozen=True)
class WorldSnapshot:
    """Immutable per-tick view; observations never read live state."""

    tick_count: int
    sim_time: float
    scene: SceneGraph
    agents: dict  # agent_id -> AgentState (frozen copies)
    obstacles: tuple  # dynamic obstacle tuples from traffic
    signal_states: dict  # signal id -> state string
    imu: dict  # agent_id -> (body accel, gyro) for this tick


@dataclass
class _Setpoint:
    kind: str = "none"  # none | velocity | position
    target: tuple = (0.0, 0.0, 0.0)
    orientation: tuple | None = None


class World:
    """Single-writer simulation state; all mutations go through step()."""

    def __init__(self, scene: SceneGraph, seed: int, roster: list[AgentSpec],
                 vehicles_per_km: float = 5.0, pedestrians_per_km: float = 10.0,
                 clock_mode: str = "lockstep"):
        validate_scene(scene)
        ids = [a.agent_id for a in roster]
        if len(set(ids)) != len(ids):
            raise EngineError("duplicate agent ids in roster")
        self.scene = scene
        self.seed = seed
        self.roster = list(roster)
        self.vehicles_per_km = vehicles_per_km
        self.pedestrians_per_km = pedestrians_per_km
        self.clock = WorldClock(mode=clock_mode)
        self._spawn_overrides: dict[str, tuple[tuple[float, float, float], float]] = {}
        self.reset(seed)

    # -- lifecycle -------------------------------------------------------------

    def reset(self, seed: int | None = None,
              spawn_overrides: dict[str, tuple[tuple[float, float, float], float]] | None = None) -> None:
        """Restore tick 0 with freshly derived PRNG streams.

        spawn_overrides maps agent_id to (position, yaw) and persists until
        the next reset that passes a new mapping (or {} to clear).
        """
        from . import traffic

        if seed is not None:
            self.seed = seed
        if spawn_overrides is not None:
            self._spawn_overrides = dict(spawn_overrides)
        self.clock.tick_count = 0
        self.agents: dict[str, AgentState] = {}
        self._setpoints: dict[str, _Setpoint] = {}
        self._prev_velocity: dict[str, tuple] = {}
        self._prev_attitude: dict[str, tuple] = {}
        self.collision_counts: dict[str, int] = {}
        for spec in self.roster:
            pos, yaw = spec.spawn_position, spec.spawn_yaw
            if spec.agent_id in self._spawn_overrides:
                pos, yaw = self._spawn_overrides[spec.agent_id]
            if spec.kind == "vehicle":
                pos = (pos[0], pos[1], 0.0)
            st = AgentState(agent_id=spec.agent_id, kind=spec.kind,
                            position=tuple(pos), attitude=(0.0, 0.0, yaw))
            self.agents[spec.agent_id] = st
            self._setpoints[spec.agent_id] = _Setpoint()
            self._prev_velocity[spec.agent_id] = st.velocity
            self._prev_attitude[spec.agent_id] = st.attitude
            self.collision_counts[spec.agent_id] = 0
        self.traffic = traffic.TrafficState(self.scene, self.seed,
                                            self.vehicles_per_km, self.pedestrians_per_km)
        self._snapshot = self._take_snapshot()

    # -- commands ---------------------------------------------------------------

    def apply_command(self, agent_id: str, cmd: ControlCommand) -> dict:
        st = self.agents.get(agent_id)
        if st is None:
            raise UnknownAgentError(f"unknown agent {agent_id!r}")
        allowed = DRONE_COMMANDS if st.kind == "drone" else VEHICLE_COMMANDS
        if cmd.type not in allowed:
            if cmd.type in DRONE_COMMANDS | VEHICLE_COMMANDS:
                raise KindMismatchError(f"command {cmd.type!r} not valid for {st.kind}")
            raise BadCommandError(f"unknown command type {cmd.type!r}")
        handler = getattr(self, "_cmd_" + cmd.type)
        handler(st, cmd.value)
        return {"agent_id": agent_id, "type": cmd.type, "tick_count": self.clock.tick_count}

    @staticmethod
    def _vec3(value, what) -> tuple[float, float, float]:
        try:
            x, y, z = (float(v) for v in value)
        except (TypeError, ValueError):
            raise BadCommandError(f"{what} must be three numbers") from None
        if not all(math.isfinite(v) for v in (x, y, z)):
            raise BadCommandError(f"{what} must be finite")
        return (x, y, z)

    @staticmethod
    def _unit(value, what, lo=0.0, hi=1.0) -> float:
        try:
            v = float(value)
        except (TypeError, ValueError):
            raise BadCommandError(f"{what} must be a number") from None
        if not math.isfinite(v) or not (lo <= v <= hi):
            raise BadCommandError(f"{what} out of [{lo}, {hi}]")
        return v

    def _cmd_target_velocity(self, st, value):
        self._setpoints[st.agent_id] = _Setpoint("velocity", self._vec3(value, "target_velocity"),
                                                 self._setpoints[st.agent_id].orientation)

    def _cmd_target_position(self, st, value):
        self._setpoints[st.agent_id] = _Setpoint("position", self._vec3(value, "target_position"),
                                                 self._setpoints[st.agent_id].orientation)

    def _cmd_target_orientation(self, st, value):
        sp = self._setpoints[st.agent_id]
        sp.orientation = self._vec3(value, "target_orientation")

    def _cmd_camera(self, st, value):
        try:
            pan, tilt = (float(v) for v in value)
        except (TypeError, ValueError):
            raise BadCommandError("camera must be (pan, tilt)") from None
        if not (math.isfinite(pan) and math.isfinite(tilt)):
            raise BadCommandError("camera angles must be finite")
        st.camera = (pan, tilt)

    def _cmd_steering(self, st, value):
        v = self._unit(value, "steering", -WHEEL_ANGLE_MAX, WHEEL_ANGLE_MAX)
        st.wheel_angle = v

    def _cmd_throttle(self, st, value):
        st.throttle = self._unit(value, "throttle")

    def _cmd_brake(self, st, value):
        st.brake = self._unit(value, "brake")

    def _cmd_gear(self, st, value):
        if value not in GEARS:
            raise BadCommandError(f"gear must be one of {GEARS}")
        st.gear = value

    def _cmd_start(self, st, value):
        st.armed = True

    def _cmd_stop(self, st, value):
        st.armed = False

    # -- stepping ----------------------------------------------------------------

    def step(self, n: int = 1) -> None:
        if n < 1:
            raise EngineError("step count must be >= 1")
        for _ in range(n):
            self._tick()
        self._snapshot = self._take_snapshot()

    def _tick(self) -> None:
        dt = self.clock.step_dt
        self.traffic.step(dt)
        for agent_id in sorted(self.agents):
            st = self.agents[agent_id]
            self._prev_velocity[agent_id] = st.velocity
            self._prev_attitude[agent_id] = st.attitude
            st.collided = False
            if st.kind == "drone":
                self._integrate_drone(st, dt)
            else:
                self._integrate_vehicle(st, dt)
        self.clock.tick_count += 1

    def _integrate_drone(self, st: AgentState, dt: float) -> None:
        sp = self._setpoints[st.agent_id]
        if not st.armed:
            v_set = (0.0, 0.0, 0.0)
        elif sp.kind == "velocity":
            v_set = sp.target
        elif sp.kind == "position":
            dx = [sp.target[i] - st.position[i] for i in range(3)]
            v_set = _clamp_norm((DRONE_POS_KP * dx[0], DRONE_POS_KP * dx[1], DRONE_POS_KP * dx[2]),
                                DRONE_POS_V_MAX)
        else:
            v_set = (0.0, 0.0, 0.0)
        dv = tuple(v_set[i] - st.velocity[i] for i in range(3))
        dv = _clamp_norm(dv, DRONE_A_MAX * dt)
        v = _clamp_norm(tuple(st.velocity[i] + dv[i] for i in range(3)), DRONE_MAX_SPEED)
        new_pos = tuple(st.position[i] + v[i] * dt for i in range(3))
        if sp.orientation is not None:
            st.attitude = tuple(_track_angle(st.attitude[i], sp.orientation[i], ATTITUDE_RATE * dt)
                                for i in range(3))
        self._move_with_collision(st, new_pos, v)

    def _integrate_vehicle(self, st: AgentState, dt: float) -> None:
        vx, vy, _ = st.velocity
        yaw = st.attitude[2]
        v = vx * math.cos(yaw) + vy * math.sin(yaw)  # signed longitudinal speed
        throttle = st.throttle if st.armed else 0.0
        if st.gear == "forward":
            a = THROTTLE_GAIN * throttle
        elif st.gear == "reverse":
            a = -THROTTLE_GAIN * throttle
        else:
            a = 0.0
        if v > 0:
            a -= BRAKE_GAIN * st.brake + DRAG_DECEL
        elif v < 0:
            a += BRAKE_GAIN * st.brake + DRAG_DECEL
        v_new = v + a * dt
        if st.gear == "forward":
            v_new = min(max(v_new, 0.0), VEHICLE_MAX_SPEED)
        elif st.gear == "reverse":
            v_new = max(min(v_new, 0.0), -VEHICLE_MAX_REVERSE)
        else:
            if v != 0.0 and (v > 0) != (v_new > 0):
                v_new = 0.0
        if v == 0.0 and st.gear == "neutral":
            v_new = 0.0
        yaw_new = geo.wrap_angle(yaw + v_new * math.tan(st.wheel_angle) / WHEELBASE * dt)
        st.attitude = (0.0, 0.0, yaw_new)
        vel = (v_new * math.cos(yaw_new), v_new * math.sin(yaw_new), 0.0)
        new_pos = (st.position[0] + vel[0] * dt, st.position[1] + vel[1] * dt, 0.0)
        self._move_with_collision(st, new_pos, vel)

    def _move_with_collision(self, st: AgentState, new_pos, vel) -> None:
        """Swept move: clamp at the last free sample before a prism/bounds hit."""
        old = st.position
        dist = math.dist(old, new_pos)
        steps = max(1, int(math.ceil(dist / 0.5)))
        last_free = old
        hit = False
        for k in range(1, steps + 1):
            t = k / steps
            p = tuple(old[i] + (new_pos[i] - old[i]) * t for i in range(3))
            if p[2] < 0.0:
                p = (p[0], p[1], 0.0)
            if self._position_blocked(p):
                hit = True
                break
            last_free = p
        if hit:
            st.position = last_free
            st.velocity = (0.0, 0.0, 0.0)
            st.collided = True
            self.collision_counts[st.agent_id] += 1
        else:
            st.position = last_free
            st.velocity = vel

    def _position_blocked(self, p) -> bool:
        x0, y0, x1, y1 = self.scene.bounds
        if not (x0 <= p[0] <= x1 and y0 <= p[1] <= y1):
            return True
        for oid in self.scene.index.query_rect((p[0] - 0.1, p[1] - 0.1, p[0] + 0.1, p[1] + 0.1)):
            obj = self.scene.get(oid)
            if hasattr(obj, "footprint") and obj.height > p[2]:
                if geo.point_in_polygon((p[0], p[1]), obj.footprint) and \
                   geo.dist_point_polyline((p[0], p[1]), list(obj.footprint) + [obj.footprint[0]]) > 1e-9:
                    return True
        return False

    # -- observation support -------------------------------------------------------

    def imu_sample(self, agent_id: str) -> tuple[tuple, tuple]:
        """Body-frame (accel incl. gravity reaction, gyro) from last two ticks."""
        st = self.agents.get(agent_id)
        if st is None:
            raise UnknownAgentError(f"unknown agent {agent_id!r}")
        dt = self.clock.step_dt
        pv = self._prev_velocity[agent_id]
        accel_world = tuple((st.velocity[i] - pv[i]) / dt for i in range(3))
        accel_world = (accel_world[0], accel_world[1], accel_world[2] + 9.81)
        roll, pitch, yaw = st.attitude
        accel_body = _world_to_body(accel_world, roll, pitch, yaw)
        pa = self._prev_attitude[agent_id]
        gyro = tuple(geo.wrap_angle(st.attitude[i] - pa[i]) / dt for i in range(3))
        return accel_body, gyro

    def snapshot(self) -> WorldSnapshot:
        return self._snapshot

    def _take_snapshot(self) -> WorldSnapshot:
        agents = {aid: replace(st) for aid, st in self.agents.items()}
        return WorldSnapshot(
            tick_count=self.clock.tick_count,
            sim_time=self.clock.sim_time,
            scene=self.scene,
            agents=agents,
            obstacles=tuple(self.traffic.dynamic_obstacles()),
            signal_states=dict(self.traffic.signal_states()),
            imu={aid: self.imu_sample(aid) for aid in self.agents},
        )


def _clamp_norm(v: tuple, limit: float) -> tuple:
    n = math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    if n <= limit or n == 0.0:
        return tuple(v)
    s = limit / n
    return (v[0] * s, v[1] * s, v[2] * s)


def _track_angle(current: float, target: float, max_step: float) -> float:
    d = geo.wrap_angle(target - current)
    if abs(d) <= max_step:
        return target
    return geo.wrap_angle(current + math.copysign(max_step, d))


def _world_to_body(v: tuple, roll: float, pitch: float, yaw: float) -> tuple:
    # inverse ZYX rotation: undo yaw, then pitch, then roll
    cy, sy = math.cos(yaw), math.sin(yaw)
    x1 = cy * v[0] + sy * v[1]
    y1 = -sy * v[0] + cy * v[1]
    z1 = v[2]
    cp, sp = math.cos(pitch), math.sin(pitch)
    x2 = cp * x1 - sp * z1
    z2 = sp * x1 + cp * z1
    cr, sr = math.cos(roll), math.sin(roll)
    y3 = cr * y1 + sr * z2
    z3 = -sr * y1 + cr * z2
    return (x2, y3, z3)
