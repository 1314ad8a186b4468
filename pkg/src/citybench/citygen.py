"""Procedural grid-city generator.

Generates a connected street grid with signalized 4-way intersections,
crosswalks, block-filling buildings and sidewalk furniture.  Output is
fully determined by (seed, params): the same inputs serialize to the
same bytes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import rng
from .scene import (
    Building,
    Crosswalk,
    FurnitureItem,
    SceneGraph,
    StreetSegment,
    TrafficLightSpec,
    validate_scene,
)

# named palette shared with the benchmark generators, which refer to
# buildings by color word
PALETTE: list[tuple[str, tuple[int, int, int]]] = [
    ("red", (190, 60, 55)),
    ("blue", (60, 90, 190)),
    ("green", (70, 150, 80)),
    ("yellow", (210, 190, 70)),
    ("white", (235, 235, 235)),
    ("gray", (130, 130, 135)),
    ("orange", (220, 130, 60)),
    ("purple", (130, 80, 170)),
    ("brown", (140, 100, 70)),
    ("cyan", (80, 180, 190)),
]

CATEGORY_NOUN = {
    "office": "office tower",
    "mall": "mall",
    "residential": "apartment building",
    "public": "public hall",
}

_HEIGHT_RANGE = {
    "office": (30.0, 90.0),
    "mall": (12.0, 30.0),
    "residential": (18.0, 60.0),
    "public": (10.0, 25.0),
}


def color_name(color: tuple[int, int, int]) -> str:
    """Nearest palette name for an RGB triple (exact for generated scenes)."""
    best = min(PALETTE, key=lambda nc: sum((a - b) ** 2 for a, b in zip(nc[1], color)))
    return best[0]


@dataclass(frozen=True)
class CityParams:
    rows: int = 4
    cols: int = 4
    block_size: float = 200.0
    building_density: float = 0.7
    street_width: float = 12.0
    lanes_per_direction: int = 1
    speed_limit: float = 14.0  # m/s
    origin_anchor: tuple[float, float] = (39.9, 116.4)

    def validate(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid must have at least 1 row and 1 column")
        if self.block_size < 40.0:
            raise ValueError("block size must be >= 40 m")
        if not 0.0 <= self.building_density <= 1.0:
            raise ValueError("building density must lie in [0, 1]")
        if self.street_width <= 0 or self.speed_limit <= 0:
            raise ValueError("street width and speed limit must be positive")


def generate_city(seed: int, params: CityParams | None = None) -> SceneGraph:
    """Build the deterministic grid city for (seed, params)."""
    p = params or CityParams()
    p.validate()
    B, W = p.block_size, p.street_width
    rows, cols = p.rows, p.cols
    pad = W * 0.5 + 8.0

    bounds = (-pad, -pad, cols * B + pad, rows * B + pad)
    scene = SceneGraph(
        id=f"grid-{rows}x{cols}-b{int(B)}-s{seed}",
        origin_anchor=p.origin_anchor,
        bounds=bounds,
        ground_id=1,
    )

    next_id = 2

    def take_id() -> int:
        nonlocal next_id
        oid = next_id
        next_id += 1
        return oid

    # streets: one segment between adjacent intersections, per grid line
    h_lines: dict[int, list[int]] = {}
    v_lines: dict[int, list[int]] = {}
    for i in range(rows + 1):
        h_lines[i] = []
        for j in range(cols):
            seg = StreetSegment(
                id=take_id(),
                centerline=[(j * B, i * B), ((j + 1) * B, i * B)],
                width=W,
                lanes_per_direction=p.lanes_per_direction,
                speed_limit=p.speed_limit,
                name=f"Avenue {i}",
            )
            scene.streets.append(seg)
            h_lines[i].append(seg.id)
    for j in range(cols + 1):
        v_lines[j] = []
        for i in range(rows):
            seg = StreetSegment(
                id=take_id(),
                centerline=[(j * B, i * B), (j * B, (i + 1) * B)],
                width=W,
                lanes_per_direction=p.lanes_per_direction,
                speed_limit=p.speed_limit,
                name=f"Street {j}",
            )
            scene.streets.append(seg)
            v_lines[j].append(seg.id)

    # buildings: disjoint lots inside each block keep footprints off streets
    brng = rng.stream(seed, "citygen.buildings")
    margin = W * 0.5 + 6.0
    for bi in range(rows):
        for bj in range(cols):
            x0, y0 = bj * B + margin, bi * B + margin
            inner = B - 2.0 * margin
            lots = max(1, int(inner // 60.0))
            lot = inner / lots
            for li in range(lots):
                for lj in range(lots):
                    if brng.random() > p.building_density:
                        continue
                    gap = 5.0
                    max_side = lot - 2.0 * gap
                    if max_side < 14.0:
                        continue
                    w = brng.uniform(14.0, max_side)
                    h = brng.uniform(14.0, max_side)
                    cx = x0 + lj * lot + gap + brng.uniform(0.0, max_side - w) + w * 0.5
                    cy = y0 + li * lot + gap + brng.uniform(0.0, max_side - h) + h * 0.5
                    category = brng.choice(list(_HEIGHT_RANGE))
                    lo, hi = _HEIGHT_RANGE[category]
                    cname, color = PALETTE[brng.randrange(len(PALETTE))]
                    oid = take_id()
                    scene.buildings.append(
                        Building(
                            id=oid,
                            name=f"{cname}-{category}-{oid}",
                            footprint=[
                                (cx - w / 2, cy - h / 2),
                                (cx + w / 2, cy - h / 2),
                                (cx + w / 2, cy + h / 2),
                                (cx - w / 2, cy + h / 2),
                            ],
                            height=round(brng.uniform(lo, hi), 1),
                            color=color,
                            category=category,
                        )
                    )

    # crosswalks: one per intersection, across a deterministic incident street
    crng = rng.stream(seed, "citygen.crosswalks")
    for i in range(rows + 1):
        for j in range(cols + 1):
            incident: list[tuple[int, float]] = []  # (street id, axis angle)
            if j < cols:
                incident.append((h_lines[i][j], 0.0))
            if j > 0:
                incident.append((h_lines[i][j - 1], math.pi))
            if i < rows:
                incident.append((v_lines[j][i], math.pi / 2))
            if i > 0:
                incident.append((v_lines[j][i - 1], -math.pi / 2))
            sid, ang = incident[crng.randrange(len(incident))]
            d = W * 0.5 + 4.0  # stripe center offset from the intersection
            cx = j * B + d * math.cos(ang)
            cy = i * B + d * math.sin(ang)
            scene.crosswalks.append(
                Crosswalk(
                    id=take_id(),
                    cx=cx,
                    cy=cy,
                    half_len=1.5,
                    half_wid=W * 0.5 + 3.0,  # spans sidewalk to sidewalk
                    angle=ang if ang in (0.0, math.pi) else math.pi / 2,
                    street_id=sid,
                )
            )

    # signals at 4-way (interior) intersections: one controller per axis,
    # phase plans offset so the axes alternate (cycle 30 s)
    for i in range(1, rows):
        for j in range(1, cols):
            ns = [v_lines[j][i - 1], v_lines[j][i]]
            ew = [h_lines[i][j - 1], h_lines[i][j]]
            scene.signals.append(
                TrafficLightSpec(
                    id=take_id(),
                    position=(j * B + W * 0.5 + 1.0, i * B + W * 0.5 + 1.0),
                    controlled_street_ids=ns,
                    phase_plan=[("green", 12.0), ("yellow", 3.0), ("red", 15.0)],
                )
            )
            scene.signals.append(
                TrafficLightSpec(
                    id=take_id(),
                    position=(j * B - W * 0.5 - 1.0, i * B - W * 0.5 - 1.0),
                    controlled_street_ids=ew,
                    phase_plan=[("red", 15.0), ("green", 12.0), ("yellow", 3.0)],
                )
            )

    # sidewalk furniture: trees along blocks plus intersection fixtures
    frng = rng.stream(seed, "citygen.furniture")
    side = W * 0.5 + 2.5
    for i in range(rows + 1):
        for j in range(cols):
            x_start, y = j * B, i * B
            n_trees = max(1, int(B // 45.0))
            for k in range(n_trees):
                x = x_start + (k + 0.5) * B / n_trees + frng.uniform(-4.0, 4.0)
                sgn = 1.0 if frng.random() < 0.5 else -1.0
                scene.furniture.append(
                    FurnitureItem(
                        id=take_id(),
                        kind="tree",
                        position=(x, y + sgn * side),
                        radius=1.4,
                        height=round(frng.uniform(4.0, 8.0), 1),
                    )
                )
    for j in range(cols + 1):
        for i in range(rows):
            x, y_start = j * B, i * B
            y = y_start + 0.5 * B + frng.uniform(-6.0, 6.0)
            sgn = 1.0 if frng.random() < 0.5 else -1.0
            kind = frng.choice(["streetlight", "bench", "sign", "bus_stop"])
            radius = {"streetlight": 0.3, "bench": 0.9, "sign": 0.3, "bus_stop": 1.5}[kind]
            height = {"streetlight": 6.0, "bench": 0.9, "sign": 2.5, "bus_stop": 2.8}[kind]
            scene.furniture.append(
                FurnitureItem(
                    id=take_id(),
                    kind=kind,
                    position=(x + sgn * side, y),
                    radius=radius,
                    height=height,
                )
            )

    scene.freeze()
    validate_scene(scene)
    return scene
