"""Benchmark task definitions: QA and VLN generation, authored-case loading.

QA and VLN ground truth is computed from the scene graph at generation time
and stored both as canonical answer text and as a structured record, so
scoring never re-runs the simulator.  Scene-understanding, dialogue, and
planning cases are authored files; generating their free-text truths would
need a language model and would break determinism.
"""

from __future__ import annotations

import json
import logging
import math
import types
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import geometry as geo
from . import rng, sensing
from .citygen import CATEGORY_NOUN, color_name
from .planning import shortest_path
from .scene import Building, Crosswalk, FurnitureItem, SceneGraph

log = logging.getLogger("citybench.tasks")

CASE_FORMAT = "citybench-cases/1"
FAMILIES = ("scene_understanding", "qa", "dialogue", "vln", "planning")
QA_SUBTYPES = ("distance", "position", "counting")
LINTS = ("wrong_counting", "wrong_existence", "wrong_position",
         "negative_response", "unnecessary_content")

QA_EYE_HEIGHT = 1.7
COUNT_RADIUS = 100.0
BEARING_REJECT_DEG = 5.0
VLN_ALTITUDE = 30.0
VLN_MIN_LEN = 50.0
VLN_MAX_LEN = 400.0
SHORT_CUTOFF = 150.0
SUCCESS_RADIUS = 20.0
TURN_THRESHOLD_DEG = 30.0
LANDMARK_RADIUS = 30.0


class TaskError(Exception):
    pass


@dataclass(frozen=True)
class TaskCase:
    case_id: str
    family: str
    prompt_text: str
    spawn_pose: dict  # {"position": [x, y, z], "yaw": float}
    ground_truth: dict  # {"text": str, "structured": dict | None}
    qa_subtype: str | None = None
    turns: tuple = ()  # dialogue prompts, one per turn
    panorama: bool = True  # observe via the canonical 8 + nadir sweep
    provenance: str = "generated"


@dataclass(frozen=True)
class VlnEpisode:
    case_id: str
    start_pose: dict
    instruction: str
    goal: tuple
    shortest_path_length: float
    reference_waypoints: tuple
    length_class: str
    success_radius: float = SUCCESS_RADIUS


# -- shared geometry helpers ----------------------------------------------------


def _static_snapshot(scene: SceneGraph):
    return types.SimpleNamespace(scene=scene, obstacles=())


def nearest_footprint_distance(p, footprint) -> float:
    """2D distance from p to the polygon boundary (0 if never reached)."""
    best = math.inf
    n = len(footprint)
    for i in range(n):
        d = geo.dist_point_segment(p, footprint[i], footprint[(i + 1) % n])
        best = min(best, d)
    return best


def _object_aim_point(obj) -> tuple:
    if isinstance(obj, Building):
        cx, cy = geo.polygon_centroid(obj.footprint)
        return (cx, cy, obj.height / 2.0)
    if isinstance(obj, Crosswalk):
        return (obj.cx, obj.cy, 0.0)
    if isinstance(obj, FurnitureItem):
        return (obj.position[0], obj.position[1], obj.height / 2.0)
    raise TaskError(f"no aim point for {type(obj).__name__}")


def visible_from(scene: SceneGraph, eye, obj, snap=None) -> bool:
    """Centroid-ray visibility: the first surface the ray meets is the object."""
    snap = snap or _static_snapshot(scene)
    target = _object_aim_point(obj)
    d = np.array(target, dtype=np.float64) - np.array(eye, dtype=np.float64)
    dist = float(np.linalg.norm(d))
    if dist < 1e-6:
        return True
    origins = np.array([eye], dtype=np.float64)
    dirs = (d / dist)[None, :]
    t, ids, _ = sensing.cast_rays(snap, origins, dirs, dist + 1.0)
    return int(ids[0]) == obj.id


def _sample_observer(scene: SceneGraph, r) -> tuple:
    """A pose on some street: (x, y, yaw); the eye sits QA_EYE_HEIGHT up."""
    streets = sorted(scene.streets, key=lambda s: s.id)
    street = r.choice(streets)
    length = geo.polyline_length(street.centerline)
    s = r.uniform(0.1, 0.9) * length
    (x, y), (tx, ty) = geo.polyline_point(street.centerline, s)
    off = r.uniform(-street.width / 2 + 0.5, street.width / 2 - 0.5)
    x, y = x - ty * off, y + tx * off
    yaw = r.uniform(-math.pi, math.pi)
    return (x, y, yaw)


def _pose_doc(x, y, z, yaw) -> dict:
    return {"position": [x, y, z], "yaw": yaw}


def _noun(building: Building) -> str:
    return CATEGORY_NOUN.get(building.category, "building")


def building_phrase(b: Building) -> str:
    return f"{color_name(b.color)} {_noun(b)}"


def _color_named_buildings(scene: SceneGraph) -> list:
    """Buildings whose color+category phrase is unambiguous within the scene."""
    by_name: dict[str, list] = {}
    for b in scene.buildings:
        by_name.setdefault(building_phrase(b), []).append(b)
    return sorted((bs[0] for bs in by_name.values() if len(bs) == 1),
                  key=lambda b: b.id)


# -- QA generation ----------------------------------------------------------------


def round_to_5(x: float) -> int:
    return int(5 * round(x / 5.0))


def generate_qa_cases(scene: SceneGraph, seed: int, per_subtype: int) -> list[TaskCase]:
    if len(scene.buildings) < 2:
        raise TaskError("QA generation needs at least 2 buildings")
    snap = _static_snapshot(scene)
    cases = []
    cases += _gen_distance(scene, seed, per_subtype, snap)
    cases += _gen_position(scene, seed, per_subtype, snap)
    cases += _gen_counting(scene, seed, per_subtype, snap)
    return cases


def _gen_distance(scene, seed, n, snap) -> list[TaskCase]:
    r = rng.stream(seed, "qa.distance")
    named = _color_named_buildings(scene)
    out = []
    attempts = 0
    while len(out) < n and attempts < 200 * max(n, 1):
        attempts += 1
        x, y, yaw = _sample_observer(scene, r)
        eye = (x, y, QA_EYE_HEIGHT)
        if len(named) < 2:
            break
        a, b = r.sample(named, 2)
        da = nearest_footprint_distance((x, y), a.footprint)
        db = nearest_footprint_distance((x, y), b.footprint)
        if abs(da - db) < 2.0:  # too close to call
            continue
        if not (visible_from(scene, eye, a, snap) and visible_from(scene, eye, b, snap)):
            continue
        idx = len(out)
        pose = _pose_doc(x, y, 0.0, yaw)
        if idx % 2 == 0:
            closer = a if da < db else b
            prompt = (f"Which is closer to you, the {building_phrase(a)} "
                      f"or the {building_phrase(b)}?")
            truth = {
                "text": f"The {building_phrase(closer)} is closer.",
                "structured": {"kind": "distance_compare",
                               "a_id": a.id, "b_id": b.id,
                               "closer_id": closer.id,
                               "a_m": da, "b_m": db},
            }
        else:
            meters = round_to_5(da)
            prompt = (f"Approximately how many meters away is "
                      f"the {building_phrase(a)}?")
            truth = {
                "text": f"Approximately {meters} meters.",
                "structured": {"kind": "distance_meters",
                               "object_id": a.id, "meters": meters,
                               "exact_m": da},
            }
        out.append(TaskCase(case_id=f"qa-distance-{seed}-{idx:04d}", family="qa",
                            qa_subtype="distance", prompt_text=prompt,
                            spawn_pose=pose, ground_truth=truth))
    if len(out) < n:
        log.warning("distance QA: generated %d of %d requested", len(out), n)
    return out


def bearing_side(x, y, yaw, target) -> tuple[str, float]:
    """(side, |angle off heading| in deg); side by the 2D cross product sign."""
    hx, hy = math.cos(yaw), math.sin(yaw)
    bx, by = target[0] - x, target[1] - y
    norm = math.hypot(bx, by)
    if norm < 1e-9:
        return ("left", 0.0)
    bx, by = bx / norm, by / norm
    cross = hx * by - hy * bx
    dot = hx * bx + hy * by
    angle = math.degrees(math.atan2(abs(cross), dot))
    return ("left" if cross > 0 else "right", angle)


def _gen_position(scene, seed, n, snap) -> list[TaskCase]:
    r = rng.stream(seed, "qa.position")
    named = _color_named_buildings(scene)
    out = []
    attempts = 0
    while len(out) < n and attempts < 200 * max(n, 1):
        attempts += 1
        if not named:
            break
        x, y, yaw = _sample_observer(scene, r)
        eye = (x, y, QA_EYE_HEIGHT)
        b = r.choice(named)
        cx, cy = geo.polygon_centroid(b.footprint)
        side, angle = bearing_side(x, y, yaw, (cx, cy))
        # ambiguous when nearly dead ahead or dead astern
        if angle < BEARING_REJECT_DEG or angle > 180.0 - BEARING_REJECT_DEG:
            continue
        if not visible_from(scene, eye, b, snap):
            continue
        pose = _pose_doc(x, y, 0.0, yaw)
        prompt = (f"Is the {building_phrase(b)} to your left "
                  f"or to your right?")
        truth = {
            "text": f"The {building_phrase(b)} is on your {side}.",
            "structured": {"kind": "position_side", "object_id": b.id,
                           "side": side, "bearing_deg": angle},
        }
        out.append(TaskCase(case_id=f"qa-position-{seed}-{len(out):04d}", family="qa",
                            qa_subtype="position", prompt_text=prompt,
                            spawn_pose=pose, ground_truth=truth))
    if len(out) < n:
        log.warning("position QA: generated %d of %d requested", len(out), n)
    return out


_COUNTABLE_KINDS = ("crosswalk", "tree", "bench", "streetlight", "sign", "bus_stop")

_KIND_PLURAL = {"crosswalk": "crosswalks", "tree": "trees", "bench": "benches",
                "streetlight": "streetlights", "sign": "signs",
                "bus_stop": "bus stops"}
_KIND_SINGULAR = {"crosswalk": "crosswalk", "tree": "tree", "bench": "bench",
                  "streetlight": "streetlight", "sign": "sign",
                  "bus_stop": "bus stop"}


def _objects_of_kind(scene: SceneGraph, kind: str):
    if kind == "crosswalk":
        return list(scene.crosswalks)
    return [f for f in scene.furniture if f.kind == kind]


def count_visible(scene: SceneGraph, eye, kind: str, snap=None) -> tuple[int, list]:
    """Objects of `kind` with centroid within COUNT_RADIUS and an open ray."""
    snap = snap or _static_snapshot(scene)
    seen = []
    for obj in _objects_of_kind(scene, kind):
        ax, ay, _ = _object_aim_point(obj)
        if math.hypot(ax - eye[0], ay - eye[1]) > COUNT_RADIUS:
            continue
        if visible_from(scene, eye, obj, snap):
            seen.append(obj.id)
    return len(seen), sorted(seen)


def _gen_counting(scene, seed, n, snap) -> list[TaskCase]:
    r = rng.stream(seed, "qa.counting")
    kinds = [k for k in _COUNTABLE_KINDS if _objects_of_kind(scene, k)]
    if not kinds:
        raise TaskError("QA generation needs at least one countable object class")
    out = []
    attempts = 0
    while len(out) < n and attempts < 200 * max(n, 1):
        attempts += 1
        x, y, yaw = _sample_observer(scene, r)
        eye = (x, y, QA_EYE_HEIGHT)
        kind = r.choice(kinds)
        count, ids = count_visible(scene, eye, kind, snap)
        plural = _KIND_PLURAL[kind]
        noun = _KIND_SINGULAR[kind] if count == 1 else plural
        pose = _pose_doc(x, y, 0.0, yaw)
        prompt = f"Looking around in a full circle, how many {plural} can you see?"
        truth = {
            "text": f"You can see {count} {noun}.",
            "structured": {"kind": "count_visible", "object_kind": kind,
                           "radius_m": COUNT_RADIUS, "count": count,
                           "visible_ids": ids},
        }
        out.append(TaskCase(case_id=f"qa-counting-{seed}-{len(out):04d}", family="qa",
                            qa_subtype="counting", prompt_text=prompt,
                            spawn_pose=pose, ground_truth=truth))
    if len(out) < n:
        log.warning("counting QA: generated %d of %d requested", len(out), n)
    return out


# -- VLN generation -----------------------------------------------------------------


def _nearest_landmark(scene: SceneGraph, p) -> Building | None:
    best, best_d = None, LANDMARK_RADIUS
    for b in scene.buildings:
        d = nearest_footprint_distance((p[0], p[1]), b.footprint)
        if geo.point_in_polygon((p[0], p[1]), b.footprint):
            d = 0.0
        if d < best_d:
            best, best_d = b, d
    return best


def _round10(x: float) -> int:
    return max(10, int(10 * round(x / 10.0)))


def synthesize_instruction(scene: SceneGraph, waypoints) -> str:
    """Turn-by-turn clauses from the reference path, with nearby landmarks."""
    segs = []
    for i in range(len(waypoints) - 1):
        a, b = waypoints[i], waypoints[i + 1]
        length = math.hypot(b[0] - a[0], b[1] - a[1])
        heading = math.atan2(b[1] - a[1], b[0] - a[0])
        segs.append((length, heading, b))
    clauses = []
    prev_heading = segs[0][1]
    for i, (length, heading, end) in enumerate(segs):
        turn = geo.wrap_angle(heading - prev_heading)
        lm = _nearest_landmark(scene, end)
        where = f" toward the {color_name(lm.color)} {_noun(lm)}" if lm else ""
        dist = f"about {_round10(length)} meters"
        if i == 0:
            clauses.append(f"Fly forward {dist}{where}")
        elif math.degrees(abs(turn)) >= TURN_THRESHOLD_DEG:
            word = "left" if turn > 0 else "right"
            clauses.append(f"then turn {word} and fly {dist}{where}")
        else:
            clauses.append(f"then continue {dist}{where}")
        prev_heading = heading
    return ", ".join(clauses) + ". Stop when you arrive."


def generate_vln_episodes(scene: SceneGraph, seed: int, n: int) -> list[VlnEpisode]:
    r = rng.stream(seed, "vln")
    short_target = (n + 1) // 2
    long_target = n - short_target
    shorts, longs = [], []
    x0, y0, x1, y1 = scene.bounds
    attempts = 0
    max_attempts = 400 * max(n, 1)
    while (len(shorts) < short_target or len(longs) < long_target) and attempts < max_attempts:
        attempts += 1
        sx, sy = r.uniform(x0, x1), r.uniform(y0, y1)
        gx, gy = r.uniform(x0, x1), r.uniform(y0, y1)
        start = (sx, sy, VLN_ALTITUDE)
        goal = (gx, gy, VLN_ALTITUDE)
        if math.hypot(gx - sx, gy - sy) > VLN_MAX_LEN:
            continue
        try:
            path = shortest_path(scene, start, goal, mode="aerial")
        except ValueError:
            continue
        if not path.reachable:
            continue
        length = path.length
        if not (VLN_MIN_LEN <= length <= VLN_MAX_LEN):
            continue
        bucket = shorts if length < SHORT_CUTOFF else longs
        target = short_target if length < SHORT_CUTOFF else long_target
        if len(bucket) >= target:
            continue
        wp = tuple(path.points)
        yaw = math.atan2(wp[1][1] - wp[0][1], wp[1][0] - wp[0][0]) if len(wp) > 1 else 0.0
        idx = len(shorts) + len(longs)
        bucket.append(VlnEpisode(
            case_id=f"vln-{seed}-{idx:04d}",
            start_pose=_pose_doc(wp[0][0], wp[0][1], VLN_ALTITUDE, yaw),
            instruction=synthesize_instruction(scene, wp),
            goal=(goal[0], goal[1], VLN_ALTITUDE),
            shortest_path_length=length,
            reference_waypoints=wp,
            length_class="short" if length < SHORT_CUTOFF else "long",
        ))
    episodes = shorts + longs
    if len(episodes) < n:
        raise TaskError(f"VLN sampling found {len(episodes)} of {n} episodes "
                        f"after {attempts} attempts")
    return episodes


# -- authored cases and lints ----------------------------------------------------------


def case_to_dict(case: TaskCase) -> dict:
    doc = {
        "case_id": case.case_id,
        "family": case.family,
        "prompt_text": case.prompt_text,
        "spawn_pose": case.spawn_pose,
        "ground_truth": case.ground_truth,
        "panorama": case.panorama,
        "provenance": case.provenance,
    }
    if case.qa_subtype:
        doc["qa_subtype"] = case.qa_subtype
    if case.turns:
        doc["turns"] = list(case.turns)
    return doc


def episode_to_dict(ep: VlnEpisode) -> dict:
    return {
        "case_id": ep.case_id,
        "family": "vln",
        "start_pose": ep.start_pose,
        "instruction": ep.instruction,
        "goal": list(ep.goal),
        "success_radius": ep.success_radius,
        "shortest_path_length": ep.shortest_path_length,
        "reference_waypoints": [list(p) for p in ep.reference_waypoints],
        "length_class": ep.length_class,
    }


def save_cases(path, cases, episodes=()) -> None:
    doc = {"format": CASE_FORMAT,
           "cases": [case_to_dict(c) for c in cases],
           "vln_episodes": [episode_to_dict(e) for e in episodes]}
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def case_from_dict(doc: dict, where: str) -> TaskCase:
    for key in ("case_id", "family", "prompt_text", "ground_truth"):
        if key not in doc:
            raise TaskError(f"{where}: missing field {key!r}")
    family = doc["family"]
    if family not in FAMILIES:
        raise TaskError(f"{where}: unknown family {family!r}")
    subtype = doc.get("qa_subtype")
    if family == "qa" and subtype not in QA_SUBTYPES:
        raise TaskError(f"{where}: qa case needs a qa_subtype in {QA_SUBTYPES}")
    turns = tuple(doc.get("turns") or ())
    if family == "dialogue" and len(turns) < 2:
        raise TaskError(f"{where}: dialogue cases need at least 2 turns")
    truth = doc["ground_truth"]
    if not isinstance(truth, dict) or "text" not in truth:
        raise TaskError(f"{where}: ground_truth must be an object with 'text'")
    return TaskCase(
        case_id=str(doc["case_id"]),
        family=family,
        qa_subtype=subtype,
        prompt_text=str(doc["prompt_text"]),
        spawn_pose=doc.get("spawn_pose") or {"position": [0.0, 0.0, 0.0], "yaw": 0.0},
        ground_truth=truth,
        turns=turns,
        panorama=bool(doc.get("panorama", True)),
        provenance=str(doc.get("provenance", "authored")),
    )


def episode_from_dict(doc: dict, where: str) -> VlnEpisode:
    for key in ("case_id", "start_pose", "instruction", "goal",
                "shortest_path_length", "reference_waypoints", "length_class"):
        if key not in doc:
            raise TaskError(f"{where}: missing field {key!r}")
    if doc["length_class"] not in ("short", "long"):
        raise TaskError(f"{where}: length_class must be short|long")
    length = float(doc["shortest_path_length"])
    if length <= 0:
        raise TaskError(f"{where}: shortest_path_length must be > 0")
    return VlnEpisode(
        case_id=str(doc["case_id"]),
        start_pose=doc["start_pose"],
        instruction=str(doc["instruction"]),
        goal=tuple(float(c) for c in doc["goal"]),
        shortest_path_length=length,
        reference_waypoints=tuple(tuple(float(c) for c in p)
                                  for p in doc["reference_waypoints"]),
        length_class=doc["length_class"],
        success_radius=float(doc.get("success_radius", SUCCESS_RADIUS)),
    )


def load_authored_cases(path) -> tuple[list[TaskCase], list[VlnEpisode]]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise TaskError(f"{path}: cannot parse case file: {e}") from e
    if not isinstance(doc, dict) or doc.get("format") != CASE_FORMAT:
        raise TaskError(f"{path}: not a {CASE_FORMAT} document")
    cases = [case_from_dict(c, f"{path}:cases[{i}]")
             for i, c in enumerate(doc.get("cases", []))]
    episodes = [episode_from_dict(e, f"{path}:vln_episodes[{i}]")
                for i, e in enumerate(doc.get("vln_episodes", []))]
    return cases, episodes


def validate_case(case: TaskCase, scene: SceneGraph | None = None) -> list[dict]:
    """Structural lints named after human-review categories."""
    lints = []

    def flag(name, msg):
        lints.append({"lint": name, "case_id": case.case_id, "message": msg})

    text = (case.ground_truth.get("text") or "").strip()
    if not text:
        flag("negative_response", "ground-truth text is empty")
    sentences = [s for s in text.split(".") if s.strip()]
    if len(sentences) > 1 or len(text) > 200:
        flag("unnecessary_content", "canonical answer should be one short sentence")

    st = case.ground_truth.get("structured")
    if scene is not None and isinstance(st, dict):
        ids = [st[k] for k in ("object_id", "a_id", "b_id", "closer_id") if k in st]
        scene_ids = {obj.id for obj in scene.iter_objects()}
        for oid in ids:
            if oid not in scene_ids:
                flag("wrong_existence", f"object id {oid} not in scene")
        eye = (case.spawn_pose["position"][0], case.spawn_pose["position"][1],
               QA_EYE_HEIGHT)
        if st.get("kind") == "count_visible" and not any(
                l["lint"] == "wrong_existence" for l in lints):
            count, _ = count_visible(scene, eye, st["object_kind"])
            if count != st.get("count"):
                flag("wrong_counting",
                     f"stored count {st.get('count')} but scene gives {count}")
        if st.get("kind") == "position_side" and not any(
                l["lint"] == "wrong_existence" for l in lints):
            obj = next((b for b in scene.buildings if b.id == st["object_id"]), None)
            if obj is not None:
                cx, cy = geo.polygon_centroid(obj.footprint)
                side, _ = bearing_side(case.spawn_pose["position"][0],
                                       case.spawn_pose["position"][1],
                                       case.spawn_pose["yaw"], (cx, cy))
                if side != st.get("side"):
                    flag("wrong_position",
                         f"stored side {st.get('side')!r} but scene gives {side!r}")
    return lints
