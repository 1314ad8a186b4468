"""Background city traffic: lane graph, IDM car-following, pedestrians.

Vehicles follow directed lane edges under the Intelligent Driver Model;
red (and, conservatively, yellow) signals act as a stopped leader at the
stop line, plus a hard clamp so a front bumper can never cross on red.
Pedestrians walk sidewalk lines and cross at crosswalks only while the
crossing street's vehicle signal is red.  All randomness comes from named
streams derived from the world seed, and entities update in id order, so
trajectories are reproducible bit-exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import geometry as geo
from . import rng
from .citygen import PALETTE
from .scene import SceneGraph

VEHICLE_LENGTH = 4.5
VEHICLE_WIDTH = 1.8
VEHICLE_HEIGHT = 1.5
PED_RADIUS = 0.3
PED_HEIGHT = 1.7

IDM_A_MAX = 1.5
IDM_B = 2.0
IDM_S0 = 2.0
IDM_T = 1.5

SIDEWALK_OFFSET = 1.5  # walk line sits this far outside the roadway edge
MIN_SPAWN_GAP = VEHICLE_LENGTH + IDM_S0


class TrafficError(Exception):
    pass


@dataclass(frozen=True)
class LaneEdge:
    id: int
    street_id: int
    from_node: int
    to_node: int
    polyline: tuple
    length: float
    speed_limit: float
    signal_id: int | None
    stop_line_s: float | None


@dataclass
class LaneGraph:
    nodes: dict  # node id -> (x, y)
    edges: list  # LaneEdge, id == list index
    outgoing: dict  # node id -> sorted edge ids
    connected: bool


def build_lane_graph(scene: SceneGraph) -> LaneGraph:
    """One directed edge per lane per direction, nodes at centerline endpoints."""
    node_ids: dict[tuple, int] = {}
    node_pos: dict[int, tuple] = {}

    def node_at(p) -> int:
        key = (round(p[0] * 1000), round(p[1] * 1000))
        if key not in node_ids:
            node_ids[key] = len(node_ids)
            node_pos[node_ids[key]] = (p[0], p[1])
        return node_ids[key]

    signals_by_street: dict[int, list] = {}
    for sig in scene.signals:
        for sid in sig.controlled_street_ids:
            signals_by_street.setdefault(sid, []).append(sig)

    edges: list[LaneEdge] = []
    for street in sorted(scene.streets, key=lambda s: s.id):
        line = list(street.centerline)
        if geo.polyline_length(line) <= 0.0:
            raise TrafficError(f"street {street.id} has a zero-length centerline")
        lane_width = street.width / (2 * street.lanes_per_direction)
        for direction in (1, -1):
            pts = line if direction == 1 else list(reversed(line))
            for lane in range(street.lanes_per_direction):
                offset = (lane + 0.5) * lane_width
                lane_pts = _offset_polyline(pts, -offset)  # right-hand traffic
                length = geo.polyline_length(lane_pts)
                a, b = node_at(pts[0]), node_at(pts[-1])
                sig_id = None
                stop_s = None
                end = node_pos[b]
                for sig in signals_by_street.get(street.id, ()):
                    if math.dist(sig.position, end) <= street.width / 2 + 10.0:
                        sig_id = sig.id
                        stop_s = max(0.0, length - (street.width / 2 + 6.0))
                        break
                edges.append(LaneEdge(
                    id=len(edges), street_id=street.id, from_node=a, to_node=b,
                    polyline=tuple(lane_pts), length=length,
                    speed_limit=street.speed_limit, signal_id=sig_id, stop_line_s=stop_s,
                ))

    outgoing: dict[int, list] = {n: [] for n in node_pos}
    for e in edges:
        outgoing[e.from_node].append(e.id)
    for lst in outgoing.values():
        lst.sort()
    return LaneGraph(nodes=node_pos, edges=edges, outgoing=outgoing,
                     connected=_strongly_connected(node_pos, edges))


def _offset_polyline(pts, offset: float):
    """Shift a polyline sideways (positive = left of travel direction)."""
    out = []
    n = len(pts)
    for i in range(n):
        if i == 0:
            tx, ty = _unit(pts[0], pts[1])
        elif i == n - 1:
            tx, ty = _unit(pts[-2], pts[-1])
        else:
            ax, ay = _unit(pts[i - 1], pts[i])
            bx, by = _unit(pts[i], pts[i + 1])
            tx, ty = ax + bx, ay + by
            norm = math.hypot(tx, ty)
            if norm < 1e-9:
                tx, ty = bx, by
            else:
                tx, ty = tx / norm, ty / norm
        out.append((pts[i][0] - ty * offset, pts[i][1] + tx * offset))
    return out


def _unit(a, b):
    d = math.hypot(b[0] - a[0], b[1] - a[1])
    return (b[0] - a[0]) / d, (b[1] - a[1]) / d


def _strongly_connected(nodes: dict, edges: list) -> bool:
    if not nodes:
        return False
    fwd: dict[int, list] = {n: [] for n in nodes}
    rev: dict[int, list] = {n: [] for n in nodes}
    for e in edges:
        fwd[e.from_node].append(e.to_node)
        rev[e.to_node].append(e.from_node)

    def reaches_all(adj):
        start = next(iter(sorted(nodes)))
        seen = {start}
        stack = [start]
        while stack:
            for m in adj[stack.pop()]:
                if m not in seen:
                    seen.add(m)
                    stack.append(m)
        return len(seen) == len(nodes)

    return reaches_all(fwd) and reaches_all(rev)


@dataclass
class SimVehicle:
    id: int
    edge_id: int
    s: float  # front bumper arc position along the edge
    v: float
    route: list = field(default_factory=list)
    color: tuple = (128, 128, 128)


@dataclass
class SimPedestrian:
    id: int
    street_id: int
    side: int  # +1 = left of centerline direction, -1 = right
    direction: int  # +1 toward increasing arc length
    s: float
    speed: float
    mode: str = "walk"  # walk | wait | cross
    crosswalk_id: int | None = None
    cross_q: float = 0.0
    color: tuple = (128, 128, 128)


@dataclass(frozen=True)
class DynamicObstacle:
    id: int
    kind: str  # vehicle | pedestrian
    position: tuple  # (x, y, z) of the footprint center, z = 0
    yaw: float
    half_len: float
    half_wid: float
    radius: float
    height: float
    velocity: tuple
    color: tuple


class TrafficState:
    def __init__(self, scene: SceneGraph, seed: int,
                 vehicles_per_km: float = 5.0, pedestrians_per_km: float = 10.0):
        self.scene = scene
        self.seed = seed
        self.tick = 0
        self.step_dt = 0.05
        self.lane_graph = build_lane_graph(scene) if scene.streets else LaneGraph({}, [], {}, False)
        self._route_rng = rng.stream(seed, "traffic.routes")
        self._ped_rng = rng.stream(seed, "traffic.ped_choices")
        self._streets = {s.id: s for s in scene.streets}
        self._signals = {s.id: s for s in scene.signals}
        self._walk_ranges = self._build_walk_ranges()
        self._crosswalk_signal = self._map_crosswalk_signals()
        self._next_obstacle_id = self._static_max_id() + 1
        self.vehicles: dict[int, SimVehicle] = {}
        self.pedestrians: dict[int, SimPedestrian] = {}
        total_km = sum(geo.polyline_length(list(s.centerline)) for s in scene.streets) / 1000.0
        self._spawn_vehicles(int(round(vehicles_per_km * total_km)))
        self._spawn_pedestrians(int(round(pedestrians_per_km * total_km)))

    def _static_max_id(self) -> int:
        ids = [self.scene.ground_id]
        for group in (self.scene.buildings, self.scene.streets, self.scene.crosswalks,
                      self.scene.signals, self.scene.furniture):
            ids.extend(o.id for o in group)
        return max(ids)

    # -- population ------------------------------------------------------------

    def _spawn_vehicles(self, n: int) -> None:
        if n <= 0 or not self.lane_graph.edges:
            return
        vrng = rng.stream(self.seed, "traffic.vehicles")
        edges = self.lane_graph.edges
        weights = [e.length for e in edges]
        for _ in range(n):
            for _attempt in range(50):
                e = vrng.choices(edges, weights=weights)[0]
                if e.length < MIN_SPAWN_GAP + 2.0:
                    continue
                s = vrng.uniform(VEHICLE_LENGTH + 0.5, e.length - 0.5)
                if any(o.edge_id == e.id and abs(o.s - s) < MIN_SPAWN_GAP
                       for o in self.vehicles.values()):
                    continue
                self.add_vehicle(e.id, s, vrng.uniform(0.3, 0.8) * e.speed_limit,
                                 color=PALETTE[vrng.randrange(len(PALETTE))][1])
                break

    def _spawn_pedestrians(self, n: int) -> None:
        if n <= 0 or not self._streets:
            return
        prng = rng.stream(self.seed, "traffic.pedestrians")
        streets = sorted(self._streets.values(), key=lambda s: s.id)
        weights = [geo.polyline_length(list(s.centerline)) for s in streets]
        for _ in range(n):
            st = prng.choices(streets, weights=weights)[0]
            lo, hi = self._walk_ranges[st.id]
            if hi - lo < 2.0:
                continue
            self.add_pedestrian(
                st.id,
                side=prng.choice((1, -1)),
                s=prng.uniform(lo, hi),
                direction=prng.choice((1, -1)),
                speed=prng.uniform(0.8, 1.6),
                color=PALETTE[prng.randrange(len(PALETTE))][1],
            )

    def add_vehicle(self, edge_id: int, s: float, v: float, color=(128, 128, 128)) -> SimVehicle:
        veh = SimVehicle(id=self._next_obstacle_id, edge_id=edge_id, s=s, v=v,
                         route=[edge_id], color=tuple(color))
        self._next_obstacle_id += 1
        self.vehicles[veh.id] = veh
        return veh

    def add_pedestrian(self, street_id: int, side: int, s: float, direction: int,
                       speed: float, color=(128, 128, 128)) -> SimPedestrian:
        ped = SimPedestrian(id=self._next_obstacle_id, street_id=street_id, side=side,
                            direction=direction, s=s, speed=speed, color=tuple(color))
        self._next_obstacle_id += 1
        self.pedestrians[ped.id] = ped
        return ped

    # -- sidewalk geometry -------------------------------------------------------

    def _build_walk_ranges(self) -> dict:
        """Per street: the arc span pedestrians pace, bounded by end crosswalks."""
        ranges = {}
        for st in self._streets.values():
            length = geo.polyline_length(list(st.centerline))
            lo, hi = 0.0, length
            for cw in self.scene.crosswalks:
                if cw.street_id != st.id:
                    continue
                s_cw, _ = geo.polyline_project((cw.cx, cw.cy), list(st.centerline))
                if s_cw <= length / 2:
                    lo = max(lo, s_cw)
                else:
                    hi = min(hi, s_cw)
            ranges[st.id] = (lo, hi)
        return ranges

    def _map_crosswalk_signals(self) -> dict:
        out = {}
        for cw in self.scene.crosswalks:
            st = self._streets.get(cw.street_id)
            if st is None:
                continue
            for sig in self.scene.signals:
                if cw.street_id in sig.controlled_street_ids and \
                        math.dist(sig.position, (cw.cx, cw.cy)) <= st.width / 2 + 10.0:
                    out[cw.id] = sig.id
                    break
        return out

    def _crosswalk_at(self, street_id: int, s: float) -> object | None:
        st = self._streets[street_id]
        for cw in self.scene.crosswalks:
            if cw.street_id != street_id:
                continue
            s_cw, _ = geo.polyline_project((cw.cx, cw.cy), list(st.centerline))
            if abs(s_cw - s) < 1.0:
                return cw
        return None

    def ped_position(self, ped: SimPedestrian) -> tuple:
        st = self._streets[ped.street_id]
        (px, py), (tx, ty) = geo.polyline_point(list(st.centerline), ped.s)
        d = st.width / 2 + SIDEWALK_OFFSET
        if ped.mode == "cross":
            # straight across the street between the two walk lines
            off = ped.side * (d - ped.cross_q)
        else:
            off = ped.side * d
        return (px - ty * off, py + tx * off)

    # -- stepping ------------------------------------------------------------------

    def sim_time(self) -> float:
        return self.tick * self.step_dt

    def signal_states(self) -> dict:
        t = self.sim_time()
        return {sig.id: sig.state_at(t) for sig in self.scene.signals}

    def step(self, dt: float) -> None:
        self.step_dt = dt
        states = self.signal_states()
        buckets: dict[int, list] = {}
        for veh in self.vehicles.values():
            buckets.setdefault(veh.edge_id, []).append((veh.s, veh.id))
        for lst in buckets.values():
            lst.sort(reverse=True)
        for vid in sorted(self.vehicles):
            self._step_vehicle(self.vehicles[vid], dt, states, buckets)
        for pid in sorted(self.pedestrians):
            self._step_pedestrian(self.pedestrians[pid], dt, states)
        self.tick += 1

    def _leader_of(self, veh: SimVehicle, buckets) -> SimVehicle | None:
        best = None
        for s, vid in buckets.get(veh.edge_id, ()):
            if vid == veh.id:
                continue
            if s > veh.s or (s == veh.s and vid < veh.id):
                if best is None or s < best[0]:
                    best = (s, vid)
        return self.vehicles[best[1]] if best else None

    def _step_vehicle(self, veh: SimVehicle, dt: float, states, buckets) -> None:
        edge = self.lane_graph.edges[veh.edge_id]
        v0 = edge.speed_limit
        leader = self._leader_of(veh, buckets)
        signal_blocks = (
            edge.signal_id is not None
            and states[edge.signal_id] != "green"
            and veh.s <= edge.stop_line_s
        )
        a = IDM_A_MAX * (1.0 - (veh.v / v0) ** 4)
        gaps = []
        if leader is not None:
            gaps.append((leader.s - VEHICLE_LENGTH - veh.s, veh.v - leader.v))
        if signal_blocks:
            gaps.append((edge.stop_line_s - veh.s, veh.v))
        for gap, dv in gaps:
            gap = max(gap, 0.1)
            s_star = IDM_S0 + veh.v * IDM_T + veh.v * dv / (2.0 * math.sqrt(IDM_A_MAX * IDM_B))
            s_star = max(s_star, 0.0)
            a = min(a, IDM_A_MAX * (1.0 - (veh.v / v0) ** 4 - (s_star / gap) ** 2))
        v_new = max(0.0, veh.v + a * dt)
        s_new = veh.s + v_new * dt
        if leader is not None:
            s_new = min(s_new, self.vehicles[leader.id].s - VEHICLE_LENGTH)
        if signal_blocks:
            s_new = min(s_new, edge.stop_line_s)
        if s_new < veh.s:
            s_new = veh.s
            v_new = 0.0
        if s_new > edge.length:
            self._advance_edge(veh, s_new - edge.length, v_new, buckets)
        else:
            veh.s = s_new
            veh.v = v_new

    def _advance_edge(self, veh: SimVehicle, overshoot: float, v_new: float, buckets) -> None:
        edge = self.lane_graph.edges[veh.edge_id]
        options = list(self.lane_graph.outgoing.get(edge.to_node, ()))
        if len(options) > 1:
            no_uturn = [i for i in options
                        if not (self.lane_graph.edges[i].street_id == edge.street_id
                                and self.lane_graph.edges[i].to_node == edge.from_node)]
            if no_uturn:
                options = no_uturn
        if not options:
            veh.s = edge.length
            veh.v = 0.0
            return
        nxt = self.lane_graph.edges[options[self._route_rng.randrange(len(options))]]
        s_entry = min(overshoot, nxt.length)
        tail = None
        for other in self.vehicles.values():
            if other.id != veh.id and other.edge_id == nxt.id:
                if tail is None or other.s < tail:
                    tail = other.s
        if tail is not None and s_entry > tail - VEHICLE_LENGTH:
            if tail - VEHICLE_LENGTH < 0.0:
                veh.s = edge.length
                veh.v = 0.0
                return
            s_entry = tail - VEHICLE_LENGTH
        buckets.setdefault(nxt.id, []).append((s_entry, veh.id))
        buckets[nxt.id].sort(reverse=True)
        veh.edge_id = nxt.id
        veh.s = s_entry
        veh.v = v_new
        veh.route.append(nxt.id)

    def _step_pedestrian(self, ped: SimPedestrian, dt: float, states) -> None:
        if ped.mode == "cross":
            st = self._streets[ped.street_id]
            span = 2.0 * (st.width / 2 + SIDEWALK_OFFSET)
            ped.cross_q += ped.speed * dt
            if ped.cross_q >= span:
                ped.side = -ped.side
                ped.direction = -ped.direction
                ped.mode = "walk"
                ped.crosswalk_id = None
                ped.cross_q = 0.0
            return
        if ped.mode == "wait":
            sig_id = self._crosswalk_signal.get(ped.crosswalk_id)
            if sig_id is None or states[sig_id] == "red":
                ped.mode = "cross"
                ped.cross_q = 0.0
            return
        lo, hi = self._walk_ranges[ped.street_id]
        ped.s += ped.direction * ped.speed * dt
        if ped.s >= hi and ped.direction > 0:
            ped.s = hi
            self._at_walk_end(ped, states)
        elif ped.s <= lo and ped.direction < 0:
            ped.s = lo
            self._at_walk_end(ped, states)

    def _at_walk_end(self, ped: SimPedestrian, states) -> None:
        cw = self._crosswalk_at(ped.street_id, ped.s)
        if cw is not None and self._ped_rng.random() < 0.5:
            ped.crosswalk_id = cw.id
            sig_id = self._crosswalk_signal.get(cw.id)
            if sig_id is None or states[sig_id] == "red":
                ped.mode = "cross"
                ped.cross_q = 0.0
            else:
                ped.mode = "wait"
        else:
            ped.direction = -ped.direction

    # -- snapshot view -----------------------------------------------------------------

    def dynamic_obstacles(self) -> list[DynamicObstacle]:
        out = []
        for vid in sorted(self.vehicles):
            veh = self.vehicles[vid]
            edge = self.lane_graph.edges[veh.edge_id]
            (fx, fy), (tx, ty) = geo.polyline_point(list(edge.polyline), veh.s)
            cx, cy = fx - tx * VEHICLE_LENGTH / 2, fy - ty * VEHICLE_LENGTH / 2
            out.append(DynamicObstacle(
                id=vid, kind="vehicle", position=(cx, cy, 0.0),
                yaw=math.atan2(ty, tx), half_len=VEHICLE_LENGTH / 2,
                half_wid=VEHICLE_WIDTH / 2, radius=0.0, height=VEHICLE_HEIGHT,
                velocity=(veh.v * tx, veh.v * ty, 0.0), color=veh.color,
            ))
        for pid in sorted(self.pedestrians):
            ped = self.pedestrians[pid]
            px, py = self.ped_position(ped)
            if ped.mode == "cross":
                st = self._streets[ped.street_id]
                _, (tx, ty) = geo.polyline_point(list(st.centerline), ped.s)
                vel = (ped.side * ty * ped.speed, -ped.side * tx * ped.speed, 0.0)
            elif ped.mode == "wait":
                vel = (0.0, 0.0, 0.0)
            else:
                st = self._streets[ped.street_id]
                _, (tx, ty) = geo.polyline_point(list(st.centerline), ped.s)
                vel = (ped.direction * tx * ped.speed, ped.direction * ty * ped.speed, 0.0)
            out.append(DynamicObstacle(
                id=pid, kind="pedestrian", position=(px, py, 0.0), yaw=0.0,
                half_len=0.0, half_wid=0.0, radius=PED_RADIUS, height=PED_HEIGHT,
                velocity=vel, color=ped.color,
            ))
        return out


def step_traffic(state: TrafficState, dt: float) -> TrafficState:
    state.step(dt)
    return state
