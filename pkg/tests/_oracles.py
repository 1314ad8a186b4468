"""Independent brute-force implementations used as test oracles.

Everything here is written from the definitions, with no spatial index, no
compiled kernels, and no code shared with the package under test.  Slow on
purpose; correctness is the only goal.
"""

from __future__ import annotations

import math
from collections import Counter

# ---------------------------------------------------------------------------
# text metrics


def ngram_counts(tokens, n):
    out = Counter()
    for i in range(len(tokens) - n + 1):
        out[tuple(tokens[i:i + n])] += 1
    return out


def bleu_brute(pairs, max_n=4):
    """Corpus BLEU straight from the definition, one order at a time."""
    scores = {}
    cand_total = sum(len(c) for c, _ in pairs)
    ref_total = 0
    for c, refs in pairs:
        best = None
        for r in refs:
            key = (abs(len(r) - len(c)), len(r))
            if best is None or key < best:
                best = key
        ref_total += best[1]
    if cand_total == 0:
        return {n: 0.0 for n in range(1, max_n + 1)}
    if cand_total > ref_total:
        bp = 1.0
    else:
        bp = math.exp(1.0 - ref_total / cand_total)
    for n in range(1, max_n + 1):
        log_sum = 0.0
        ok = True
        for k in range(1, n + 1):
            num = 0
            den = 0
            for c, refs in pairs:
                cc = ngram_counts(c, k)
                den += sum(cc.values())
                for gram, cnt in cc.items():
                    allowed = max((ngram_counts(r, k)[gram] for r in refs), default=0)
                    num += min(cnt, allowed)
            if den == 0 or num == 0:
                ok = False
                break
            log_sum += math.log(num / den)
        scores[n] = bp * math.exp(log_sum / n) if ok else 0.0
    return scores


def lcs_brute(a, b):
    memo = {}

    def go(i, j):
        if i == len(a) or j == len(b):
            return 0
        if (i, j) in memo:
            return memo[(i, j)]
        if a[i] == b[j]:
            v = 1 + go(i + 1, j + 1)
        else:
            v = max(go(i + 1, j), go(i, j + 1))
        memo[(i, j)] = v
        return v

    return go(0, 0)


def rouge_brute(pairs):
    total = 0.0
    for c, refs in pairs:
        best = 0.0
        for r in refs:
            L = lcs_brute(c, r)
            if L == 0:
                continue
            p = L / len(c)
            rec = L / len(r)
            best = max(best, 2 * p * rec / (p + rec))
        total += best
    return total / len(pairs)


def meteor_min_chunks(scan, over, m):
    """Fewest chunks over every maximum matching of `scan` against `over`.

    Forward sweep over positions of `scan`; each layer maps the set of used
    `over` positions (a bitmask) to the fewest chunks spent reaching it,
    which covers every matching while folding together reorderings of the
    same choices.  States are dropped only on proof: a word that can no
    longer reach its required count, or a chunk tally that cannot beat a
    matching already in hand.
    """
    oc = Counter(over)
    need = {}
    for w, cnt in Counter(scan).items():
        want = min(cnt, oc[w])
        if want:
            need[w] = want
    positions = {}
    for j, w in enumerate(over):
        positions.setdefault(w, []).append(j)

    n_s, n_o = len(scan), len(over)
    word_mask = {w: 0 for w in positions}
    for j, w in enumerate(over):
        word_mask[w] |= 1 << j

    # run-extending first fit: its chunk count is an incumbent every kept
    # state must beat, and the matching it builds is explicit, so the bound
    # only ever discards provably non-improving states
    left = dict(need)
    taken = set()
    prev_j = None
    best = 0
    for w in scan:
        if left.get(w, 0) <= 0:
            prev_j = None
            continue
        here = None
        if prev_j is not None and prev_j + 1 < n_o and over[prev_j + 1] == w \
                and prev_j + 1 not in taken:
            here = prev_j + 1
        else:
            for j in positions[w]:
                if j not in taken:
                    here = j
                    break
        if here is None:
            prev_j = None
            continue
        if prev_j is None or here != prev_j + 1:
            best += 1
        taken.add(here)
        left[w] -= 1
        prev_j = here

    # longest common run starting at scan position >= si
    tail_longest = [1] * (n_s + 1)
    for si in range(n_s - 1, -1, -1):
        longest = tail_longest[si + 1]
        for j in positions.get(scan[si], ()):
            length = 0
            while (si + length < n_s and j + length < n_o
                   and scan[si + length] == over[j + length]):
                length += 1
            if length > longest:
                longest = length
        tail_longest[si] = longest

    # per-position tables so the sweep touches plain ints and lists only
    pos_here = [positions.get(w, ()) for w in scan]
    ahead_tail = []
    for w, want in need.items():
        ahead = [0] * (n_s + 1)
        for si in range(n_s - 1, -1, -1):
            ahead[si] = ahead[si + 1] + (1 if scan[si] == w else 0)
        ahead_tail.append((want, word_mask[w], word_mask[w].bit_count(), ahead))

    layers = [{} for _ in range(n_s + 1)]
    layers[0][0] = 0
    for si in range(n_s + 1):
        tail_here = tail_longest[si]
        for mask, chunks in layers[si].items():
            matched = mask.bit_count()
            if matched == m:
                if chunks < best:
                    best = chunks
                continue
            if si == n_s or chunks + 1 + (m - matched - 1) // tail_here >= best:
                continue
            ok = True
            for want, bits, total, ahead in ahead_tail:
                got = (bits & mask).bit_count()
                if got >= want:
                    continue
                free = total - got
                avail = ahead[si]
                if got + (avail if avail < free else free) < want:
                    ok = False  # this word is already short of its quota
                    break
            if not ok:
                continue
            if chunks + 1 + (m - matched - 1) // tail_longest[si + 1] < best:
                spot = layers[si + 1]
                old = spot.get(mask)
                if old is None or chunks < old:
                    spot[mask] = chunks  # leave scan[si] unmatched
            for j in pos_here[si]:
                if mask & (1 << j):
                    continue
                block = 0
                length = 0
                while (si + length < n_s and j + length < n_o
                       and scan[si + length] == over[j + length]
                       and not mask & (1 << (j + length))):
                    block |= 1 << (j + length)
                    length += 1
                    got_m = matched + length
                    if got_m < m and chunks + 2 + (m - got_m - 1) \
                            // tail_longest[si + length] >= best:
                        continue  # cannot beat the incumbent from there
                    land = layers[si + length]
                    stacked = mask | block
                    old = land.get(stacked)
                    if old is None or chunks + 1 < old:
                        land[stacked] = chunks + 1

    return best


def meteor_brute_pair(cand, ref):
    """Exhaustive: minimum chunk count over every maximum matching."""
    rc = Counter(ref)
    m = sum(min(cnt, rc[w]) for w, cnt in Counter(cand).items())
    if m == 0:
        return 0.0
    # chunks are common blocks, the same set seen from either side, so sweep
    # whichever orientation keeps the bitmask side short
    if len(ref) <= len(cand):
        chunks = meteor_min_chunks(cand, ref, m)
    else:
        chunks = meteor_min_chunks(ref, cand, m)
    p = m / len(cand)
    r = m / len(ref)
    fmean = 10.0 * p * r / (r + 9.0 * p)
    return fmean * (1.0 - 0.5 * (chunks / m) ** 3)


def meteor_brute(pairs):
    total = 0.0
    for c, refs in pairs:
        total += max((meteor_brute_pair(c, r) for r in refs), default=0.0)
    return total / len(pairs)


def cider_brute(pairs, max_n=4):
    n_docs = len(pairs)
    total = 0.0
    idfs = []
    for n in range(1, max_n + 1):
        df = Counter()
        for _, refs in pairs:
            grams = set()
            for r in refs:
                grams |= set(ngram_counts(r, n))
            for g in grams:
                df[g] += 1
        idfs.append({g: math.log(n_docs / (1.0 + d)) for g, d in df.items()})
    default = math.log(float(n_docs))
    for c, refs in pairs:
        acc = 0.0
        for n in range(1, max_n + 1):
            idf = idfs[n - 1]
            cv = {g: cnt * idf.get(g, default)
                  for g, cnt in ngram_counts(c, n).items()}
            cn = math.sqrt(sum(x * x for x in cv.values()))
            sim_sum = 0.0
            for r in refs:
                rv = {g: cnt * idf.get(g, default)
                      for g, cnt in ngram_counts(r, n).items()}
                rn = math.sqrt(sum(x * x for x in rv.values()))
                if cn > 0 and rn > 0:
                    dot = sum(v * rv.get(g, 0.0) for g, v in cv.items())
                    sim_sum += max(0.0, dot / (cn * rn))
            acc += sim_sum / len(refs)
        total += 10.0 * acc / max_n
    return total / n_docs


# ---------------------------------------------------------------------------
# geometry / raycasting


def ray_vs_prism(o, d, footprint, height, tmax):
    """Nearest hit of ray o + t d against an extruded polygon, t in (0, tmax)."""
    hits = []
    n = len(footprint)
    for i in range(n):
        ax, ay = footprint[i]
        bx, by = footprint[(i + 1) % n]
        ex, ey = bx - ax, by - ay
        denom = d[0] * (-ey) + d[1] * ex  # solve o+td = a+se in 2D
        if abs(denom) < 1e-15:
            continue
        t = ((ax - o[0]) * (-ey) + (ay - o[1]) * ex) / denom
        if t <= 1e-12 or t >= tmax:
            continue
        px, py = o[0] + t * d[0], o[1] + t * d[1]
        if abs(ex) >= abs(ey):
            s = (px - ax) / ex if ex != 0 else 0.0
        else:
            s = (py - ay) / ey
        if s < 0.0 or s > 1.0:
            continue
        z = o[2] + t * d[2]
        if 0.0 <= z <= height:
            hits.append(t)
    # top cap
    if d[2] != 0.0:
        t = (height - o[2]) / d[2]
        if 1e-12 < t < tmax:
            px, py = o[0] + t * d[0], o[1] + t * d[1]
            if point_in_poly_brute((px, py), footprint):
                hits.append(t)
    return min(hits) if hits else None


def ray_vs_cylinder(o, d, cx, cy, radius, height, tmax):
    ox, oy = o[0] - cx, o[1] - cy
    a = d[0] * d[0] + d[1] * d[1]
    hits = []
    if a > 1e-15:
        b = 2.0 * (ox * d[0] + oy * d[1])
        c = ox * ox + oy * oy - radius * radius
        disc = b * b - 4 * a * c
        if disc >= 0.0:
            rt = math.sqrt(disc)
            for t in ((-b - rt) / (2 * a), (-b + rt) / (2 * a)):
                if 1e-12 < t < tmax and 0.0 <= o[2] + t * d[2] <= height:
                    hits.append(t)
                    break
    if d[2] != 0.0:
        t = (height - o[2]) / d[2]
        if 1e-12 < t < tmax:
            px, py = o[0] + t * d[0], o[1] + t * d[1]
            if (px - cx) ** 2 + (py - cy) ** 2 <= radius * radius:
                hits.append(t)
    return min(hits) if hits else None


def point_in_poly_brute(p, poly):
    x, y = p
    inside = False
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            xi = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < xi:
                inside = not inside
        # boundary counts as inside for this oracle
        if min(x1, x2) - 1e-12 <= x <= max(x1, x2) + 1e-12 and \
                min(y1, y2) - 1e-12 <= y <= max(y1, y2) + 1e-12:
            cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1)
            seg2 = (x2 - x1) ** 2 + (y2 - y1) ** 2
            if seg2 > 0 and cross * cross <= 1e-18 * seg2:
                return True
    return inside


def point_in_oriented_rect(p, cx, cy, half_len, half_wid, angle):
    dx, dy = p[0] - cx, p[1] - cy
    ca, sa = math.cos(angle), math.sin(angle)
    u = dx * ca + dy * sa
    v = -dx * sa + dy * ca
    return abs(u) <= half_len + 1e-9 and abs(v) <= half_wid + 1e-9


def dist_to_segment_brute(p, a, b):
    px, py = p
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    L2 = dx * dx + dy * dy
    if L2 == 0:
        return math.hypot(px - ax, py - ay)
    t = max(0.0, min(1.0, ((px - ax) * dx + (py - ay) * dy) / L2))
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def dist_to_polyline_brute(p, line):
    return min(dist_to_segment_brute(p, line[i], line[i + 1])
               for i in range(len(line) - 1))


def nearest_footprint_distance_brute(p, poly):
    n = len(poly)
    return min(dist_to_segment_brute(p, poly[i], poly[(i + 1) % n])
               for i in range(n))


def first_solid_hit(scene, origin, direction, tmax, obstacles=()):
    """(t, id) of the nearest static-or-dynamic solid surface, else None."""
    best_t, best_id = None, None
    for b in scene.buildings:
        t = ray_vs_prism(origin, direction, b.footprint, b.height, tmax)
        if t is not None and (best_t is None or t < best_t):
            best_t, best_id = t, b.id
    for f in scene.furniture:
        t = ray_vs_cylinder(origin, direction, f.position[0], f.position[1],
                            f.radius, f.height, tmax)
        if t is not None and (best_t is None or t < best_t):
            best_t, best_id = t, f.id
    for ob in obstacles:
        if getattr(ob, "radius", None):
            t = ray_vs_cylinder(origin, direction, ob.position[0], ob.position[1],
                                ob.radius, ob.height, tmax)
        else:
            ca, sa = math.cos(ob.yaw), math.sin(ob.yaw)
            cx, cy = ob.position[0], ob.position[1]
            corners = []
            for u, v in ((1, 1), (-1, 1), (-1, -1), (1, -1)):
                corners.append((cx + u * ob.half_len * ca - v * ob.half_wid * sa,
                                cy + u * ob.half_len * sa + v * ob.half_wid * ca))
            t = ray_vs_prism(origin, direction, corners, ob.height, tmax)
        if t is not None and (best_t is None or t < best_t):
            best_t, best_id = t, ob.id
    return (best_t, best_id) if best_t is not None else None


def ground_decal_id(scene, p):
    """Same priority contract, recomputed longhand: crosswalk, street, ground."""
    cands = [cw.id for cw in scene.crosswalks
             if point_in_oriented_rect(p, cw.cx, cw.cy, cw.half_len, cw.half_wid,
                                       cw.angle)]
    if cands:
        return min(cands)
    cands = [st.id for st in scene.streets
             if dist_to_polyline_brute(p, st.centerline) <= st.width / 2.0]
    if cands:
        return min(cands)
    return scene.ground_id


def raycast_brute(scene, origin, direction, max_range, obstacles=()):
    """Full reference raycast: solids, then the ground plane with decals."""
    best = first_solid_hit(scene, origin, direction, max_range, obstacles)
    ground_t = None
    if direction[2] < 0.0 and origin[2] > 0.0:
        t = -origin[2] / direction[2]
        if 1e-12 < t < max_range:
            ground_t = t
    if ground_t is not None and (best is None or ground_t < best[0]):
        p = (origin[0] + ground_t * direction[0], origin[1] + ground_t * direction[1])
        return ground_t, ground_decal_id(scene, p)
    if best is not None:
        return best
    return None


def visible_brute(scene, eye, target_point, target_id):
    """QA-style visibility: no index, no renderer, pure geometry."""
    d = (target_point[0] - eye[0], target_point[1] - eye[1], target_point[2] - eye[2])
    dist = math.sqrt(d[0] ** 2 + d[1] ** 2 + d[2] ** 2)
    if dist < 1e-9:
        return True
    direction = (d[0] / dist, d[1] / dist, d[2] / dist)
    hit = raycast_brute(scene, eye, direction, dist + 1.0)
    return hit is not None and hit[1] == target_id


# ---------------------------------------------------------------------------
# grid-graph shortest path (planner oracle)


def dijkstra_grid(free, start, goal):
    """free: dict (i,j)->bool on a bounded grid; octile moves, corner rule."""
    import heapq

    SQRT2 = math.sqrt(2.0)
    dist = {start: 0.0}
    pq = [(0.0, start)]
    while pq:
        d, node = heapq.heappop(pq)
        if node == goal:
            return d
        if d > dist.get(node, math.inf):
            continue
        i, j = node
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                if di == 0 and dj == 0:
                    continue
                nb = (i + di, j + dj)
                if not free.get(nb, False):
                    continue
                if di != 0 and dj != 0:
                    if not (free.get((i + di, j), False) and free.get((i, j + dj), False)):
                        continue
                    w = SQRT2
                else:
                    w = 1.0
                nd = d + w
                if nd < dist.get(nb, math.inf):
                    dist[nb] = nd
                    heapq.heappush(pq, (nd, nb))
    return None
