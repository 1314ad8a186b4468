"""Scene persistence: one UTF-8 JSON document per scene.

Serialization is canonical (sorted keys, fixed indentation), so identical
scenes produce identical bytes.  The schema is documented in
docs/scene-format.md.
"""

from __future__ import annotations

import json
from pathlib import Path

from .scene import (
    Building,
    Crosswalk,
    FurnitureItem,
    SceneGraph,
    SceneError,
    StreetSegment,
    TrafficLightSpec,
    validate_scene,
)

FORMAT = "citybench-scene/1"


class SceneParseError(ValueError):
    """Malformed scene file; message carries location/field diagnostics."""


def scene_to_dict(scene: SceneGraph) -> dict:
    return {
        "format": FORMAT,
        "id": scene.id,
        "origin_anchor": {"lat": scene.origin_anchor[0], "lon": scene.origin_anchor[1]},
        "bounds": list(scene.bounds),
        "ground_id": scene.ground_id,
        "buildings": [
            {
                "id": b.id,
                "name": b.name,
                "footprint": [list(p) for p in b.footprint],
                "height": b.height,
                "color": list(b.color),
                "category": b.category,
            }
            for b in scene.buildings
        ],
        "streets": [
            {
                "id": s.id,
                "centerline": [list(p) for p in s.centerline],
                "width": s.width,
                "lanes_per_direction": s.lanes_per_direction,
                "speed_limit": s.speed_limit,
                "name": s.name,
            }
            for s in scene.streets
        ],
        "crosswalks": [
            {
                "id": c.id,
                "rectangle": {
                    "cx": c.cx,
                    "cy": c.cy,
                    "half_len": c.half_len,
                    "half_wid": c.half_wid,
                    "angle": c.angle,
                },
                "street_id": c.street_id,
            }
            for c in scene.crosswalks
        ],
        "signals": [
            {
                "id": t.id,
                "position": list(t.position),
                "controlled_street_ids": list(t.controlled_street_ids),
                "phase_plan": [[state, dur] for state, dur in t.phase_plan],
            }
            for t in scene.signals
        ],
        "furniture": [
            {
                "id": f.id,
                "kind": f.kind,
                "position": list(f.position),
                "radius": f.radius,
                "height": f.height,
            }
            for f in scene.furniture
        ],
    }


def scene_to_bytes(scene: SceneGraph) -> bytes:
    return (json.dumps(scene_to_dict(scene), sort_keys=True, indent=2) + "\n").encode("utf-8")


def save_scene(scene: SceneGraph, path: str | Path) -> None:
    Path(path).write_bytes(scene_to_bytes(scene))


def _field(doc: dict, key: str, kind, where: str):
    if key not in doc:
        raise SceneParseError(f"{where}: missing field {key!r}")
    value = doc[key]
    if kind is float and isinstance(value, int):
        value = float(value)
    if not isinstance(value, kind):
        raise SceneParseError(f"{where}.{key}: expected {kind.__name__}, got {type(value).__name__}")
    return value


def _points(raw, where: str) -> list[tuple[float, float]]:
    if not isinstance(raw, list):
        raise SceneParseError(f"{where}: expected a list of [x, y] points")
    out = []
    for k, p in enumerate(raw):
        if not (isinstance(p, list) and len(p) == 2 and all(isinstance(v, (int, float)) for v in p)):
            raise SceneParseError(f"{where}[{k}]: expected [x, y]")
        out.append((float(p[0]), float(p[1])))
    return out


def scene_from_dict(doc: dict) -> SceneGraph:
    if doc.get("format") != FORMAT:
        raise SceneParseError(f"unsupported scene format {doc.get('format')!r}")
    anchor = _field(doc, "origin_anchor", dict, "scene")
    bounds = _field(doc, "bounds", list, "scene")
    if len(bounds) != 4 or not all(isinstance(v, (int, float)) for v in bounds):
        raise SceneParseError("scene.bounds: expected [min_x, min_y, max_x, max_y]")
    scene = SceneGraph(
        id=_field(doc, "id", str, "scene"),
        origin_anchor=(
            _field(anchor, "lat", float, "scene.origin_anchor"),
            _field(anchor, "lon", float, "scene.origin_anchor"),
        ),
        bounds=tuple(float(v) for v in bounds),
        ground_id=_field(doc, "ground_id", int, "scene"),
    )
    for k, raw in enumerate(doc.get("buildings", [])):
        where = f"buildings[{k}]"
        color = _field(raw, "color", list, where)
        if len(color) != 3:
            raise SceneParseError(f"{where}.color: expected [r, g, b]")
        scene.buildings.append(
            Building(
                id=_field(raw, "id", int, where),
                name=_field(raw, "name", str, where),
                footprint=_points(raw.get("footprint"), f"{where}.footprint"),
                height=_field(raw, "height", float, where),
                color=tuple(int(v) for v in color),
                category=_field(raw, "category", str, where),
            )
        )
    for k, raw in enumerate(doc.get("streets", [])):
        where = f"streets[{k}]"
        scene.streets.append(
            StreetSegment(
                id=_field(raw, "id", int, where),
                centerline=_points(raw.get("centerline"), f"{where}.centerline"),
                width=_field(raw, "width", float, where),
                lanes_per_direction=_field(raw, "lanes_per_direction", int, where),
                speed_limit=_field(raw, "speed_limit", float, where),
                name=_field(raw, "name", str, where),
            )
        )
    for k, raw in enumerate(doc.get("crosswalks", [])):
        where = f"crosswalks[{k}]"
        rect = _field(raw, "rectangle", dict, where)
        scene.crosswalks.append(
            Crosswalk(
                id=_field(raw, "id", int, where),
                cx=_field(rect, "cx", float, f"{where}.rectangle"),
                cy=_field(rect, "cy", float, f"{where}.rectangle"),
                half_len=_field(rect, "half_len", float, f"{where}.rectangle"),
                half_wid=_field(rect, "half_wid", float, f"{where}.rectangle"),
                angle=_field(rect, "angle", float, f"{where}.rectangle"),
                street_id=_field(raw, "street_id", int, where),
            )
        )
    for k, raw in enumerate(doc.get("signals", [])):
        where = f"signals[{k}]"
        plan_raw = _field(raw, "phase_plan", list, where)
        plan = []
        for e in plan_raw:
            if not (isinstance(e, list) and len(e) == 2 and isinstance(e[0], str)):
                raise SceneParseError(f"{where}.phase_plan: expected [state, duration] pairs")
            plan.append((e[0], float(e[1])))
        pos = _points([raw.get("position")], f"{where}.position")[0]
        scene.signals.append(
            TrafficLightSpec(
                id=_field(raw, "id", int, where),
                position=pos,
                controlled_street_ids=[int(v) for v in _field(raw, "controlled_street_ids", list, where)],
                phase_plan=plan,
            )
        )
    for k, raw in enumerate(doc.get("furniture", [])):
        where = f"furniture[{k}]"
        pos = _points([raw.get("position")], f"{where}.position")[0]
        scene.furniture.append(
            FurnitureItem(
                id=_field(raw, "id", int, where),
                kind=_field(raw, "kind", str, where),
                position=pos,
                radius=_field(raw, "radius", float, where),
                height=_field(raw, "height", float, where),
            )
        )
    scene.freeze()
    validate_scene(scene)
    return scene


def load_scene(path: str | Path) -> SceneGraph:
    """Parse and validate a scene file.

    Raises SceneParseError with line/field diagnostics on malformed input
    and SceneError naming the offending object on invariant violations.
    """
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SceneParseError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from e
    if not isinstance(doc, dict):
        raise SceneParseError(f"{path}: top level must be a JSON object")
    try:
        return scene_from_dict(doc)
    except SceneError:
        raise
    except SceneParseError as e:
        raise SceneParseError(f"{path}: {e}") from None
