"""Exact 2D geometry primitives shared by the scene model, collisions and
test oracles.

Everything here is plain Python on float tuples so it can double as the
independent reference implementation against accelerated code paths.
Polygons are lists of (x, y) vertices; rectangles are (min_x, min_y,
max_x, max_y) tuples.
"""

from __future__ import annotations

import math

Vec2 = tuple[float, float]
Rect = tuple[float, float, float, float]


def signed_area(poly: list[Vec2]) -> float:
    s = 0.0
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        s += x1 * y2 - x2 * y1
    return 0.5 * s


def is_ccw(poly: list[Vec2]) -> bool:
    return signed_area(poly) > 0.0


def polygon_centroid(poly: list[Vec2]) -> Vec2:
    a = signed_area(poly)
    if abs(a) < 1e-12:
        xs = [p[0] for p in poly]
        ys = [p[1] for p in poly]
        return (sum(xs) / len(xs), sum(ys) / len(ys))
    cx = cy = 0.0
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        w = x1 * y2 - x2 * y1
        cx += (x1 + x2) * w
        cy += (y1 + y2) * w
    return (cx / (6.0 * a), cy / (6.0 * a))


def polygon_aabb(poly: list[Vec2]) -> Rect:
    xs = [p[0] for p in poly]
    ys = [p[1] for p in poly]
    return (min(xs), min(ys), max(xs), max(ys))


def _orient(a: Vec2, b: Vec2, c: Vec2) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def segments_intersect(p1: Vec2, p2: Vec2, q1: Vec2, q2: Vec2) -> bool:
    """Closed-segment intersection test, collinear overlaps included."""
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 != 0 and d2 != 0 and d3 != 0 and d4 != 0:
        return True
    if d1 == 0 and _on_segment(q1, q2, p1):
        return True
    if d2 == 0 and _on_segment(q1, q2, p2):
        return True
    if d3 == 0 and _on_segment(p1, p2, q1):
        return True
    if d4 == 0 and _on_segment(p1, p2, q2):
        return True
    return False


def _on_segment(a: Vec2, b: Vec2, p: Vec2) -> bool:
    return (
        min(a[0], b[0]) - 1e-12 <= p[0] <= max(a[0], b[0]) + 1e-12
        and min(a[1], b[1]) - 1e-12 <= p[1] <= max(a[1], b[1]) + 1e-12
    )


def point_in_polygon(p: Vec2, poly: list[Vec2]) -> bool:
    """Even-odd rule; points on the boundary count as inside."""
    x, y = p
    inside = False
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        if dist_point_segment(p, (x1, y1), (x2, y2)) < 1e-9:
            return True
        if (y1 > y) != (y2 > y):
            xi = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < xi:
                inside = not inside
    return inside


def polygon_is_simple(poly: list[Vec2]) -> bool:
    """No two non-adjacent edges may touch; adjacent edges only at the shared vertex."""
    n = len(poly)
    if n < 3:
        return False
    edges = [(poly[i], poly[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        a1, a2 = edges[i]
        if a1 == a2:
            return False
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            b1, b2 = edges[j]
            if segments_intersect(a1, a2, b1, b2):
                return False
    return True


def dist_point_segment(p: Vec2, a: Vec2, b: Vec2) -> float:
    ax, ay = a
    bx, by = b
    px, py = p
    dx, dy = bx - ax, by - ay
    d2 = dx * dx + dy * dy
    if d2 == 0.0:
        return math.hypot(px - ax, py - ay)
    t = ((px - ax) * dx + (py - ay) * dy) / d2
    t = max(0.0, min(1.0, t))
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def dist_point_polyline(p: Vec2, line: list[Vec2]) -> float:
    return min(dist_point_segment(p, line[i], line[i + 1]) for i in range(len(line) - 1))


def polyline_length(line: list[Vec2]) -> float:
    return sum(
        math.hypot(line[i + 1][0] - line[i][0], line[i + 1][1] - line[i][1])
        for i in range(len(line) - 1)
    )


def seg_seg_distance(p1: Vec2, p2: Vec2, q1: Vec2, q2: Vec2) -> float:
    if segments_intersect(p1, p2, q1, q2):
        return 0.0
    return min(
        dist_point_segment(p1, q1, q2),
        dist_point_segment(p2, q1, q2),
        dist_point_segment(q1, p1, p2),
        dist_point_segment(q2, p1, p2),
    )


def polygon_disc_intersect(poly: list[Vec2], center: Vec2, radius: float) -> bool:
    if point_in_polygon(center, poly):
        return True
    n = len(poly)
    for i in range(n):
        if dist_point_segment(center, poly[i], poly[(i + 1) % n]) <= radius:
            return True
    return False


def polyline_disc_intersect(line: list[Vec2], width: float, center: Vec2, radius: float) -> bool:
    """Disc vs a polyline buffered to ``width`` (a street ribbon)."""
    return dist_point_polyline(center, line) <= radius + width * 0.5


def rect_corners(rect: Rect) -> list[Vec2]:
    x0, y0, x1, y1 = rect
    return [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]


def rects_overlap(a: Rect, b: Rect) -> bool:
    return a[0] <= b[2] and b[0] <= a[2] and a[1] <= b[3] and b[1] <= a[3]


def polygon_rect_intersect(poly: list[Vec2], rect: Rect) -> bool:
    if not rects_overlap(polygon_aabb(poly), rect):
        return False
    corners = rect_corners(rect)
    if any(point_in_polygon(c, poly) for c in corners):
        return True
    if any(
        rect[0] <= p[0] <= rect[2] and rect[1] <= p[1] <= rect[3] for p in poly
    ):
        return True
    n = len(poly)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        for j in range(4):
            if segments_intersect(a, b, corners[j], corners[(j + 1) % 4]):
                return True
    return False


def polyline_rect_intersect(line: list[Vec2], width: float, rect: Rect) -> bool:
    half = width * 0.5
    grown = (rect[0] - half, rect[1] - half, rect[2] + half, rect[3] + half)
    corners = rect_corners(rect)
    for i in range(len(line) - 1):
        a, b = line[i], line[i + 1]
        if not rects_overlap(
            (min(a[0], b[0]), min(a[1], b[1]), max(a[0], b[0]), max(a[1], b[1])), grown
        ):
            continue
        if rect[0] <= a[0] <= rect[2] and rect[1] <= a[1] <= rect[3]:
            return True
        if rect[0] <= b[0] <= rect[2] and rect[1] <= b[1] <= rect[3]:
            return True
        for j in range(4):
            if seg_seg_distance(a, b, corners[j], corners[(j + 1) % 4]) <= half:
                return True
    return False


def oriented_rect_polygon(cx: float, cy: float, half_len: float, half_wid: float, angle: float) -> list[Vec2]:
    """Counter-clockwise corner polygon of an oriented rectangle."""
    c, s = math.cos(angle), math.sin(angle)
    out: list[Vec2] = []
    for dx, dy in ((half_len, half_wid), (-half_len, half_wid), (-half_len, -half_wid), (half_len, -half_wid)):
        out.append((cx + dx * c - dy * s, cy + dx * s + dy * c))
    out.reverse()  # the loop above winds clockwise
    return out


def segment_polygon_entry(p0: Vec2, p1: Vec2, poly: list[Vec2]) -> float | None:
    """Earliest t in [0, 1] where segment p0->p1 meets the polygon boundary.

    Returns None when the segment never touches the boundary.  A p0 already
    inside is reported by the caller via ``point_in_polygon``.
    """
    dx, dy = p1[0] - p0[0], p1[1] - p0[1]
    best: float | None = None
    n = len(poly)
    for i in range(n):
        ax, ay = poly[i]
        bx, by = poly[(i + 1) % n]
        ex, ey = bx - ax, by - ay
        denom = dx * ey - dy * ex
        if denom == 0.0:
            continue
        t = ((ax - p0[0]) * ey - (ay - p0[1]) * ex) / denom
        u = ((ax - p0[0]) * dy - (ay - p0[1]) * dx) / denom
        if 0.0 <= t <= 1.0 and 0.0 <= u <= 1.0:
            if best is None or t < best:
                best = t
    return best


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    a = math.fmod(a, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    elif a > math.pi:
        a -= 2.0 * math.pi
    return a


def polyline_point(line: list[Vec2], s: float) -> tuple[Vec2, Vec2]:
    """Point and unit tangent at arc length s (clamped to the line's span)."""
    if s <= 0.0:
        ax, ay = line[0]
        bx, by = line[1]
        d = math.hypot(bx - ax, by - ay)
        return (ax, ay), ((bx - ax) / d, (by - ay) / d)
    acc = 0.0
    for a, b in zip(line, line[1:]):
        d = math.hypot(b[0] - a[0], b[1] - a[1])
        if acc + d >= s and d > 0.0:
            t = (s - acc) / d
            tan = ((b[0] - a[0]) / d, (b[1] - a[1]) / d)
            return (a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t), tan
        acc += d
    a, b = line[-2], line[-1]
    d = math.hypot(b[0] - a[0], b[1] - a[1])
    return (b[0], b[1]), ((b[0] - a[0]) / d, (b[1] - a[1]) / d)


def polyline_project(p: Vec2, line: list[Vec2]) -> tuple[float, float]:
    """(arc length of the closest point, distance to it)."""
    best_s, best_d = 0.0, math.inf
    acc = 0.0
    for a, b in zip(line, line[1:]):
        seg = math.hypot(b[0] - a[0], b[1] - a[1])
        if seg == 0.0:
            continue
        t = ((p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1])) / (seg * seg)
        t = min(1.0, max(0.0, t))
        qx, qy = a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t
        d = math.hypot(p[0] - qx, p[1] - qy)
        if d < best_d:
            best_d = d
            best_s = acc + seg * t
        acc += seg
    return best_s, best_d
