"""Static city world: object types, invariant validation, spatial index.

A scene is immutable after construction.  Every object lives in a single
positive-integer id namespace; id 0 is reserved for "sky / no hit" in
segmentation rasters and ``ground_id`` marks bare ground pixels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import geometry as geo

GRID_CELL = 25.0  # spatial index cell size, meters
MAX_OBJECT_ID = 65535  # ids must fit 16-bit segmentation rasters

CATEGORIES = ("office", "mall", "residential", "public")
FURNITURE_KINDS = ("tree", "bench", "streetlight", "sign", "bus_stop")
SIGNAL_STATES = ("red", "green", "yellow")


class SceneError(ValueError):
    """Scene invariant violation; carries the offending object id when known."""

    def __init__(self, message: str, object_id: int | None = None):
        super().__init__(message)
        self.object_id = object_id


@dataclass(frozen=True)
class Building:
    id: int
    name: str
    footprint: list[tuple[float, float]]  # counter-clockwise simple polygon
    height: float
    color: tuple[int, int, int]
    category: str


@dataclass(frozen=True)
class StreetSegment:
    id: int
    centerline: list[tuple[float, float]]
    width: float
    lanes_per_direction: int
    speed_limit: float
    name: str


@dataclass(frozen=True)
class Crosswalk:
    id: int
    # oriented rectangle: center, half extents along/across the axis, axis angle
    cx: float
    cy: float
    half_len: float
    half_wid: float
    angle: float
    street_id: int

    def polygon(self) -> list[tuple[float, float]]:
        return geo.oriented_rect_polygon(self.cx, self.cy, self.half_len, self.half_wid, self.angle)


@dataclass(frozen=True)
class FurnitureItem:
    id: int
    kind: str
    position: tuple[float, float]
    radius: float
    height: float


@dataclass(frozen=True)
class TrafficLightSpec:
    id: int
    position: tuple[float, float]
    controlled_street_ids: list[int]
    phase_plan: list[tuple[str, float]]  # (state, duration seconds)

    def cycle_length(self) -> float:
        return sum(d for _, d in self.phase_plan)

    def state_at(self, t: float) -> str:
        """Signal state at simulation time t (cyclic phase plan)."""
        cycle = self.cycle_length()
        u = math.fmod(t, cycle)
        for state, dur in self.phase_plan:
            if u < dur:
                return state
            u -= dur
        return self.phase_plan[-1][0]


@dataclass
class SceneGraph:
    id: str
    origin_anchor: tuple[float, float]  # (lat deg, lon deg)
    bounds: tuple[float, float, float, float]  # min_x, min_y, max_x, max_y
    ground_id: int
    buildings: list[Building] = field(default_factory=list)
    streets: list[StreetSegment] = field(default_factory=list)
    crosswalks: list[Crosswalk] = field(default_factory=list)
    signals: list[TrafficLightSpec] = field(default_factory=list)
    furniture: list[FurnitureItem] = field(default_factory=list)

    def __post_init__(self):
        self._by_id: dict[int, object] | None = None
        self._index: _SpatialIndex | None = None

    def freeze(self) -> None:
        """Build lookup structures once the object lists are final."""
        self._by_id = {obj.id: obj for obj in self.iter_objects()}
        self._index = None

    def iter_objects(self):
        yield from self.buildings
        yield from self.streets
        yield from self.crosswalks
        yield from self.signals
        yield from self.furniture

    def get(self, object_id: int):
        if self._by_id is None:
            self.freeze()
        return self._by_id.get(object_id)

    def max_id(self) -> int:
        ids = [o.id for o in self.iter_objects()]
        ids.append(self.ground_id)
        return max(ids)

    @property
    def index(self) -> "_SpatialIndex":
        if self._index is None:
            self._index = _SpatialIndex(self)
        return self._index

    # -- geometry per object kind ------------------------------------------

    def footprint_aabb(self, obj) -> tuple[float, float, float, float]:
        if isinstance(obj, Building):
            return geo.polygon_aabb(obj.footprint)
        if isinstance(obj, StreetSegment):
            x0, y0, x1, y1 = geo.polygon_aabb(obj.centerline)
            h = obj.width * 0.5
            return (x0 - h, y0 - h, x1 + h, y1 + h)
        if isinstance(obj, Crosswalk):
            return geo.polygon_aabb(obj.polygon())
        if isinstance(obj, FurnitureItem):
            x, y = obj.position
            r = obj.radius
            return (x - r, y - r, x + r, y + r)
        if isinstance(obj, TrafficLightSpec):
            x, y = obj.position
            return (x, y, x, y)
        raise TypeError(type(obj))

    def footprint_intersects_rect(self, obj, rect) -> bool:
        if isinstance(obj, Building):
            return geo.polygon_rect_intersect(obj.footprint, rect)
        if isinstance(obj, StreetSegment):
            return geo.polyline_rect_intersect(obj.centerline, obj.width, rect)
        if isinstance(obj, Crosswalk):
            return geo.polygon_rect_intersect(obj.polygon(), rect)
        if isinstance(obj, FurnitureItem):
            x, y = obj.position
            qx = min(max(x, rect[0]), rect[2])
            qy = min(max(y, rect[1]), rect[3])
            return math.hypot(qx - x, qy - y) <= obj.radius
        if isinstance(obj, TrafficLightSpec):
            x, y = obj.position
            return rect[0] <= x <= rect[2] and rect[1] <= y <= rect[3]
        raise TypeError(type(obj))

    def footprint_intersects_disc(self, obj, center, radius: float) -> bool:
        if isinstance(obj, Building):
            return geo.polygon_disc_intersect(obj.footprint, center, radius)
        if isinstance(obj, StreetSegment):
            return geo.polyline_disc_intersect(obj.centerline, obj.width, center, radius)
        if isinstance(obj, Crosswalk):
            return geo.polygon_disc_intersect(obj.polygon(), center, radius)
        if isinstance(obj, FurnitureItem):
            x, y = obj.position
            return math.hypot(center[0] - x, center[1] - y) <= radius + obj.radius
        if isinstance(obj, TrafficLightSpec):
            x, y = obj.position
            return math.hypot(center[0] - x, center[1] - y) <= radius
        raise TypeError(type(obj))


class _SpatialIndex:
    """Uniform grid over scene bounds; cells hold candidate object ids.

    Candidates are exact supersets (AABB based); query methods filter with
    precise footprint tests so results match a brute-force scan.
    """

    def __init__(self, scene: SceneGraph, cell: float = GRID_CELL):
        self.scene = scene
        self.cell = cell
        x0, y0, x1, y1 = scene.bounds
        self.x0, self.y0 = x0, y0
        self.nx = max(1, int(math.ceil((x1 - x0) / cell)))
        self.ny = max(1, int(math.ceil((y1 - y0) / cell)))
        self.cells: dict[tuple[int, int], list[int]] = {}
        for obj in scene.iter_objects():
            ax0, ay0, ax1, ay1 = scene.footprint_aabb(obj)
            for ci, cj in self._cells_for_rect(ax0, ay0, ax1, ay1):
                self.cells.setdefault((ci, cj), []).append(obj.id)

    def _cell_of(self, x: float, y: float) -> tuple[int, int]:
        ci = int((x - self.x0) // self.cell)
        cj = int((y - self.y0) // self.cell)
        return (min(max(ci, 0), self.nx - 1), min(max(cj, 0), self.ny - 1))

    def _cells_for_rect(self, x0, y0, x1, y1):
        i0, j0 = self._cell_of(x0, y0)
        i1, j1 = self._cell_of(x1, y1)
        for ci in range(i0, i1 + 1):
            for cj in range(j0, j1 + 1):
                yield (ci, cj)

    def candidates_rect(self, rect) -> set[int]:
        out: set[int] = set()
        for key in self._cells_for_rect(*rect):
            out.update(self.cells.get(key, ()))
        return out

    def query_rect(self, rect, kind: type | None = None) -> list[int]:
        scene = self.scene
        hits = []
        for oid in self.candidates_rect(rect):
            obj = scene.get(oid)
            if kind is not None and not isinstance(obj, kind):
                continue
            if scene.footprint_intersects_rect(obj, rect):
                hits.append(oid)
        hits.sort()
        return hits

    def query_disc(self, center, radius: float, kind: type | None = None) -> list[int]:
        rect = (center[0] - radius, center[1] - radius, center[0] + radius, center[1] + radius)
        scene = self.scene
        hits = []
        for oid in self.candidates_rect(rect):
            obj = scene.get(oid)
            if kind is not None and not isinstance(obj, kind):
                continue
            if scene.footprint_intersects_disc(obj, center, radius):
                hits.append(oid)
        hits.sort()
        return hits


def query_radius(scene: SceneGraph, center, radius: float, kind: type | None = None) -> list[int]:
    """Ids of objects whose footprint intersects the query disc, ascending."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    return scene.index.query_disc(center, radius, kind)


def query_radius_bruteforce(scene: SceneGraph, center, radius: float, kind: type | None = None) -> list[int]:
    """Index-free reference scan used by property tests."""
    hits = [
        obj.id
        for obj in scene.iter_objects()
        if (kind is None or isinstance(obj, kind))
        and scene.footprint_intersects_disc(obj, center, radius)
    ]
    hits.sort()
    return hits


def validate_scene(scene: SceneGraph) -> None:
    """Raise SceneError on the first invariant violation."""
    x0, y0, x1, y1 = scene.bounds
    if not (x1 > x0 and y1 > y0):
        raise SceneError("bounds must have positive extent")

    seen: set[int] = set()

    def check_id(oid: int):
        if not isinstance(oid, int) or oid <= 0:
            raise SceneError(f"object id {oid!r} must be a positive integer", oid if isinstance(oid, int) else None)
        if oid > MAX_OBJECT_ID:
            raise SceneError(f"object id {oid} exceeds 16-bit raster limit", oid)
        if oid in seen:
            raise SceneError(f"duplicate object id {oid}", oid)
        seen.add(oid)

    check_id(scene.ground_id)

    street_ids = {s.id for s in scene.streets}

    for b in scene.buildings:
        check_id(b.id)
        if len(b.footprint) < 3:
            raise SceneError(f"building {b.id} footprint needs >= 3 vertices", b.id)
        if not geo.polygon_is_simple(b.footprint):
            raise SceneError(f"building {b.id} footprint self-intersects", b.id)
        if not geo.is_ccw(b.footprint):
            raise SceneError(f"building {b.id} footprint must wind counter-clockwise", b.id)
        if not b.height > 0:
            raise SceneError(f"building {b.id} height must be > 0", b.id)
        if b.category not in CATEGORIES:
            raise SceneError(f"building {b.id} has unknown category {b.category!r}", b.id)
        _check_inside(scene, b, geo.polygon_aabb(b.footprint))

    for s in scene.streets:
        check_id(s.id)
        if len(s.centerline) < 2:
            raise SceneError(f"street {s.id} centerline needs >= 2 points", s.id)
        for i in range(len(s.centerline) - 1):
            if s.centerline[i] == s.centerline[i + 1]:
                raise SceneError(f"street {s.id} has repeated consecutive points", s.id)
        if not s.width > 0:
            raise SceneError(f"street {s.id} width must be > 0", s.id)
        if s.lanes_per_direction < 1:
            raise SceneError(f"street {s.id} needs >= 1 lane per direction", s.id)
        _check_inside(scene, s, scene.footprint_aabb(s))

    for c in scene.crosswalks:
        check_id(c.id)
        if c.street_id not in street_ids:
            raise SceneError(f"crosswalk {c.id} references missing street {c.street_id}", c.id)
        street = scene.get(c.street_id)
        near = min(geo.dist_point_polyline(p, street.centerline) for p in c.polygon())
        if near > street.width * 0.5 and not any(
            geo.point_in_polygon(q, c.polygon())
            for q in street.centerline
        ):
            if geo.dist_point_polyline((c.cx, c.cy), street.centerline) > street.width * 0.5 + max(c.half_len, c.half_wid):
                raise SceneError(f"crosswalk {c.id} does not touch street {c.street_id}", c.id)
        _check_inside(scene, c, geo.polygon_aabb(c.polygon()))

    for f in scene.furniture:
        check_id(f.id)
        if f.kind not in FURNITURE_KINDS:
            raise SceneError(f"furniture {f.id} has unknown kind {f.kind!r}", f.id)
        if not f.radius > 0:
            raise SceneError(f"furniture {f.id} radius must be > 0", f.id)
        if not f.height > 0:
            raise SceneError(f"furniture {f.id} height must be > 0", f.id)
        _check_inside(scene, f, scene.footprint_aabb(f))

    for t in scene.signals:
        check_id(t.id)
        states = [s for s, _ in t.phase_plan]
        if any(s not in SIGNAL_STATES for s in states):
            raise SceneError(f"signal {t.id} has unknown phase state", t.id)
        if any(not d > 0 for _, d in t.phase_plan):
            raise SceneError(f"signal {t.id} has non-positive phase duration", t.id)
        if "green" not in states or "red" not in states:
            raise SceneError(f"signal {t.id} phase plan needs a green and a red phase", t.id)
        for sid in t.controlled_street_ids:
            if sid not in street_ids:
                raise SceneError(f"signal {t.id} controls missing street {sid}", t.id)
        _check_inside(scene, t, scene.footprint_aabb(t))


def _check_inside(scene: SceneGraph, obj, aabb) -> None:
    x0, y0, x1, y1 = scene.bounds
    eps = 1e-6
    if aabb[0] < x0 - eps or aabb[1] < y0 - eps or aabb[2] > x1 + eps or aabb[3] > y1 + eps:
        raise SceneError(f"object {obj.id} footprint leaves scene bounds", obj.id)
