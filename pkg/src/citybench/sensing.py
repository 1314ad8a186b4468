"""Ray-cast sensor suite: camera rasters, LiDAR, GPS, IMU, state reports.

Everything is a pure function of one immutable world snapshot, so
concurrent observation is race-free and two calls at the same tick return
identical bytes.  The renderer is instance-colored and flat-shaded (one
Lambert term against a fixed sun); it exists to feed perception tasks,
not to look photographic.

Conventions: the camera looks along body +x, +y is left, +z is up.
Positive pan yaws the view left; positive tilt pitches it down
(tilt pi/2 = straight-down view).  Depth is the Euclidean ray range in
millimeters, saturating at 65.535 m; rays that hit nothing nearer than
the saturation range are sky (id 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import geometry as geo
from . import rng
from .scene import SceneGraph

CAMERA_WIDTH = 320
CAMERA_HEIGHT = 240
CAMERA_HFOV = math.pi / 2

DEPTH_SATURATION_M = 65.535
SKY_ID = 0
SKY_COLOR = (135, 206, 235)
SUN_DIR = (1.0 / math.sqrt(6.0), 1.0 / math.sqrt(6.0), 2.0 / math.sqrt(6.0))
AMBIENT = 0.35

GROUND_COLOR = (146, 172, 122)
STREET_COLOR = (60, 60, 65)
CROSSWALK_COLOR = (236, 240, 241)
FURNITURE_COLORS = {
    "tree": (34, 139, 34),
    "bench": (139, 90, 43),
    "streetlight": (105, 105, 105),
    "sign": (178, 34, 34),
    "bus_stop": (70, 130, 180),
}
# sensor mast height above the agent origin
MOUNT_HEIGHT = {"drone": 0.0, "vehicle": 1.4}

LIDAR_RINGS = 16
LIDAR_ELEVATIONS_DEG = np.linspace(-15.0, 15.0, LIDAR_RINGS)
LIDAR_AZIMUTH_STEPS = 360
LIDAR_MAX_RANGE = 80.0

GPS_M_PER_DEG_LAT = 110540.0
GPS_M_PER_DEG_LON = 111320.0

SENSOR_NAMES = ("state", "gps", "imu", "depth", "segmentation", "color", "lidar")

# the 8-direction sweep plus one top-down view
PANORAMA_VIEWS = tuple((k * math.pi / 4, 0.0) for k in range(8)) + ((0.0, math.pi / 2),)

_GRID_CELL = 25.0


class SensorError(Exception):
    pass


@dataclass(frozen=True)
class CameraModel:
    width: int = CAMERA_WIDTH
    height: int = CAMERA_HEIGHT
    horizontal_fov: float = CAMERA_HFOV

    def __post_init__(self):
        if self.width < 16 or self.height < 16:
            raise SensorError("camera dimensions must be at least 16 px")
        if not (0.0 < self.horizontal_fov < math.pi):
            raise SensorError("horizontal fov must be in (0, pi)")


@dataclass(frozen=True)
class LidarScan:
    points: np.ndarray  # (N, 3) float32, agent body frame
    rings: int = LIDAR_RINGS
    azimuth_step_deg: float = 1.0
    max_range: float = LIDAR_MAX_RANGE


# ---------------------------------------------------------------------------
# scene packing for the kernel


class _PackedStatic:
    def __init__(self, scene: SceneGraph):
        self.bounds = scene.bounds
        x0, y0, x1, y1 = scene.bounds
        self.ox, self.oy = x0, y0
        self.nx = max(1, int(math.ceil((x1 - x0) / _GRID_CELL)))
        self.ny = max(1, int(math.ceil((y1 - y0) / _GRID_CELL)))

        buildings = sorted(scene.buildings, key=lambda b: b.id)
        verts, offs, heights, ids = [], [0], [], []
        for b in buildings:
            verts.extend(b.footprint)
            offs.append(len(verts))
            heights.append(b.height)
            ids.append(b.id)
        self.p_verts = np.array(verts, dtype=np.float64).reshape(-1, 2)
        self.p_offs = np.array(offs, dtype=np.int64)
        self.p_h = np.array(heights, dtype=np.float64)
        self.p_ids = np.array(ids, dtype=np.int64)

        furn = sorted(scene.furniture, key=lambda f: f.id)
        self.c_xyrh = np.array([(f.position[0], f.position[1], f.radius, f.height)
                                for f in furn], dtype=np.float64).reshape(-1, 4)
        self.c_ids = np.array([f.id for f in furn], dtype=np.int64)

        cws = sorted(scene.crosswalks, key=lambda c: c.id)
        self.cw_par = np.array([(c.cx, c.cy, math.cos(c.angle), math.sin(c.angle),
                                 c.half_len, c.half_wid) for c in cws],
                               dtype=np.float64).reshape(-1, 6)
        self.cw_ids = np.array([c.id for c in cws], dtype=np.int64)

        segs, seg_ids = [], []
        for st in sorted(scene.streets, key=lambda s: s.id):
            for a, b in zip(st.centerline, st.centerline[1:]):
                segs.append((a[0], a[1], b[0], b[1], st.width / 2))
                seg_ids.append(st.id)
        self.st_par = np.array(segs, dtype=np.float64).reshape(-1, 5)
        self.st_ids = np.array(seg_ids, dtype=np.int64)

        self.cp_offs, self.cp_idx = self._grid_csr(
            len(buildings),
            lambda k, rect: geo.polygon_rect_intersect(buildings[k].footprint, rect))
        self.cc_offs, self.cc_idx = self._grid_csr(
            len(furn),
            lambda k, rect: _disc_rect(furn[k].position, furn[k].radius, rect))
        self.gcw_offs, self.gcw_idx = self._grid_csr(
            len(cws),
            lambda k, rect: geo.polygon_rect_intersect(cws[k].polygon(), rect))
        self.gst_offs, self.gst_idx = self._grid_csr(
            len(segs),
            lambda k, rect: geo.polyline_rect_intersect(
                [(segs[k][0], segs[k][1]), (segs[k][2], segs[k][3])], segs[k][4] * 2, rect))

        self.ground_id = scene.ground_id
        lut = np.zeros((65536, 3), dtype=np.uint8)
        lut[SKY_ID] = SKY_COLOR
        lut[scene.ground_id] = GROUND_COLOR
        for st in scene.streets:
            lut[st.id] = STREET_COLOR
        for c in cws:
            lut[c.id] = CROSSWALK_COLOR
        for b in buildings:
            lut[b.id] = b.color
        for f in furn:
            lut[f.id] = FURNITURE_COLORS[f.kind]
        self.color_lut = lut

    def _grid_csr(self, count: int, hit_test) -> tuple[np.ndarray, np.ndarray]:
        cells: list[list[int]] = [[] for _ in range(self.nx * self.ny)]
        for k in range(count):
            for i in range(self.ny):
                cy0 = self.oy + i * _GRID_CELL
                for j in range(self.nx):
                    cx0 = self.ox + j * _GRID_CELL
                    if hit_test(k, (cx0, cy0, cx0 + _GRID_CELL, cy0 + _GRID_CELL)):
                        cells[i * self.nx + j].append(k)
        offs = np.zeros(len(cells) + 1, dtype=np.int64)
        for n, lst in enumerate(cells):
            offs[n + 1] = offs[n] + len(lst)
        idx = np.array([k for lst in cells for k in lst], dtype=np.int64)
        return offs, idx


def _disc_rect(center, radius, rect) -> bool:
    qx = min(max(center[0], rect[0]), rect[2])
    qy = min(max(center[1], rect[1]), rect[3])
    return math.hypot(qx - center[0], qy - center[1]) <= radius


def _packed_static(scene: SceneGraph) -> _PackedStatic:
    packed = getattr(scene, "_sensing_packed", None)
    if packed is None:
        packed = _PackedStatic(scene)
        scene._sensing_packed = packed
    return packed


class _PackedDynamic:
    """Per-snapshot obstacle pack; rebuilt each frame (it is small)."""

    def __init__(self, packed: _PackedStatic, obstacles):
        verts, offs, heights, ids = [], [0], [], []
        cyls, cyl_ids = [], []
        boxes = []
        for ob in obstacles:
            if ob.kind == "vehicle":
                poly = geo.oriented_rect_polygon(ob.position[0], ob.position[1],
                                                 ob.half_len, ob.half_wid, ob.yaw)
                verts.extend(poly)
                offs.append(len(verts))
                heights.append(ob.height)
                ids.append(ob.id)
                boxes.append(geo.polygon_aabb(poly))
            else:
                cyls.append((ob.position[0], ob.position[1], ob.radius, ob.height))
                cyl_ids.append(ob.id)
        self.p_verts = np.array(verts, dtype=np.float64).reshape(-1, 2)
        self.p_offs = np.array(offs, dtype=np.int64)
        self.p_h = np.array(heights, dtype=np.float64)
        self.p_ids = np.array(ids, dtype=np.int64)
        self.c_xyrh = np.array(cyls, dtype=np.float64).reshape(-1, 4)
        self.c_ids = np.array(cyl_ids, dtype=np.int64)
        self.dp_offs, self.dp_idx = self._aabb_csr(packed, boxes)
        ped_boxes = [(c[0] - c[2], c[1] - c[2], c[0] + c[2], c[1] + c[2]) for c in cyls]
        self.dc_offs, self.dc_idx = self._aabb_csr(packed, ped_boxes)

    @staticmethod
    def _aabb_csr(packed: _PackedStatic, boxes) -> tuple[np.ndarray, np.ndarray]:
        cells: list[list[int]] = [[] for _ in range(packed.nx * packed.ny)]
        for k, (bx0, by0, bx1, by1) in enumerate(boxes):
            j0 = max(0, int((bx0 - packed.ox) // _GRID_CELL))
            j1 = min(packed.nx - 1, int((bx1 - packed.ox) // _GRID_CELL))
            i0 = max(0, int((by0 - packed.oy) // _GRID_CELL))
            i1 = min(packed.ny - 1, int((by1 - packed.oy) // _GRID_CELL))
            for i in range(i0, i1 + 1):
                for j in range(j0, j1 + 1):
                    cells[i * packed.nx + j].append(k)
        offs = np.zeros(len(cells) + 1, dtype=np.int64)
        for n, lst in enumerate(cells):
            offs[n + 1] = offs[n] + len(lst)
        idx = np.array([k for lst in cells for k in lst], dtype=np.int64)
        return offs, idx


# ---------------------------------------------------------------------------
# the kernel


@njit(cache=True)
def _ray_prisms(ox, oy, oz, dx, dy, dz, best_t,
                verts, o0, o1, h):
    """Nearest hit against one prism; returns (t, nx, ny, nz) or t=-1."""
    hit_t = -1.0
    nx = ny = nz = 0.0
    for k in range(o0, o1):
        ax = verts[k, 0]
        ay = verts[k, 1]
        k2 = k + 1 if k + 1 < o1 else o0
        bx = verts[k2, 0]
        by = verts[k2, 1]
        ex = bx - ax
        ey = by - ay
        denom = dx * ey - dy * ex
        if abs(denom) > 1e-15:
            t = ((ax - ox) * ey - (ay - oy) * ex) / denom
            u = ((ax - ox) * dy - (ay - oy) * dx) / denom
            if t > 1e-9 and 0.0 <= u <= 1.0 and t < best_t and (hit_t < 0.0 or t < hit_t):
                z = oz + dz * t
                if 0.0 <= z <= h:
                    ln = math.sqrt(ex * ex + ey * ey)
                    wx = ey / ln
                    wy = -ex / ln
                    if wx * dx + wy * dy > 0.0:
                        wx = -wx
                        wy = -wy
                    hit_t = t
                    nx, ny, nz = wx, wy, 0.0
    if abs(dz) > 1e-15:
        t = (h - oz) / dz
        if t > 1e-9 and t < best_t and (hit_t < 0.0 or t < hit_t):
            qx = ox + dx * t
            qy = oy + dy * t
            inside = False
            jj = o1 - 1
            for ii in range(o0, o1):
                xi = verts[ii, 0]
                yi = verts[ii, 1]
                xj = verts[jj, 0]
                yj = verts[jj, 1]
                if (yi > qy) != (yj > qy) and qx < (xj - xi) * (qy - yi) / (yj - yi) + xi:
                    inside = not inside
                jj = ii
            if inside:
                hit_t = t
                nx, ny = 0.0, 0.0
                nz = 1.0 if dz < 0.0 else -1.0
    return hit_t, nx, ny, nz


@njit(cache=True)
def _ray_cylinder(ox, oy, oz, dx, dy, dz, best_t, cx, cy, rad, h):
    hit_t = -1.0
    nx = ny = nz = 0.0
    mx = ox - cx
    my = oy - cy
    a = dx * dx + dy * dy
    if a > 1e-15:
        b = 2.0 * (mx * dx + my * dy)
        c = mx * mx + my * my - rad * rad
        disc = b * b - 4.0 * a * c
        if disc >= 0.0:
            sq = math.sqrt(disc)
            for sgn in (-1.0, 1.0):
                t = (-b + sgn * sq) / (2.0 * a)
                if t > 1e-9 and t < best_t:
                    z = oz + dz * t
                    if 0.0 <= z <= h:
                        wx = (ox + dx * t - cx) / rad
                        wy = (oy + dy * t - cy) / rad
                        if wx * dx + wy * dy > 0.0:
                            wx = -wx
                            wy = -wy
                        hit_t = t
                        nx, ny, nz = wx, wy, 0.0
                        break
    if abs(dz) > 1e-15:
        t = (h - oz) / dz
        if t > 1e-9 and t < best_t and (hit_t < 0.0 or t < hit_t):
            qx = ox + dx * t - cx
            qy = oy + dy * t - cy
            if qx * qx + qy * qy <= rad * rad:
                hit_t = t
                nx, ny = 0.0, 0.0
                nz = 1.0 if dz < 0.0 else -1.0
    return hit_t, nx, ny, nz


@njit(cache=True)
def _resolve_decal(gx, gy, gox, goy, gnx, gny,
                   cw_par, cw_ids, gcw_offs, gcw_idx,
                   st_par, st_ids, gst_offs, gst_idx, ground_id):
    j = int((gx - gox) // _GRID_CELL)
    i = int((gy - goy) // _GRID_CELL)
    if i < 0 or i >= gny or j < 0 or j >= gnx:
        return ground_id
    cell = i * gnx + j
    for n in range(gcw_offs[cell], gcw_offs[cell + 1]):
        k = gcw_idx[n]
        rx = gx - cw_par[k, 0]
        ry = gy - cw_par[k, 1]
        ct = cw_par[k, 2]
        st = cw_par[k, 3]
        lx = ct * rx + st * ry
        ly = -st * rx + ct * ry
        if abs(lx) <= cw_par[k, 4] and abs(ly) <= cw_par[k, 5]:
            return cw_ids[k]
    for n in range(gst_offs[cell], gst_offs[cell + 1]):
        k = gst_idx[n]
        ax = st_par[k, 0]
        ay = st_par[k, 1]
        bx = st_par[k, 2]
        by = st_par[k, 3]
        hw = st_par[k, 4]
        ex = bx - ax
        ey = by - ay
        ln2 = ex * ex + ey * ey
        t = 0.0
        if ln2 > 0.0:
            t = ((gx - ax) * ex + (gy - ay) * ey) / ln2
            if t < 0.0:
                t = 0.0
            elif t > 1.0:
                t = 1.0
        qx = ax + ex * t - gx
        qy = ay + ey * t - gy
        if qx * qx + qy * qy <= hw * hw:
            return st_ids[k]
    return ground_id


@njit(cache=True)
def _cast_kernel(origins, dirs, max_range,
                 p_verts, p_offs, p_h, p_ids,
                 c_xyrh, c_ids,
                 gox, goy, gnx, gny,
                 cp_offs, cp_idx, cc_offs, cc_idx,
                 dp_verts, dp_offs, dp_h, dp_ids, dpc_offs, dpc_idx,
                 dc_xyrh, dc_ids, dcc_offs, dcc_idx,
                 cw_par, cw_ids, gcw_offs, gcw_idx,
                 st_par, st_ids, gst_offs, gst_idx,
                 ground_id,
                 out_t, out_id, out_n):
    width = gnx * _GRID_CELL
    height = gny * _GRID_CELL
    for r in range(origins.shape[0]):
        ox = origins[r, 0]
        oy = origins[r, 1]
        oz = origins[r, 2]
        dx = dirs[r, 0]
        dy = dirs[r, 1]
        dz = dirs[r, 2]

        ground_t = 1e30
        if dz < -1e-12 and oz > 0.0:
            ground_t = -oz / dz
        t_hi = max_range if max_range < ground_t else ground_t
        best_t = max_range
        best_id = 0
        bnx = bny = bnz = 0.0

        # clip the ray to the grid's 2D extent
        t_enter = 0.0
        t_exit = t_hi
        ok = True
        if abs(dx) > 1e-15:
            ta = (gox - ox) / dx
            tb = (gox + width - ox) / dx
            if ta > tb:
                ta, tb = tb, ta
            if ta > t_enter:
                t_enter = ta
            if tb < t_exit:
                t_exit = tb
        elif ox < gox or ox > gox + width:
            ok = False
        if abs(dy) > 1e-15:
            ta = (goy - oy) / dy
            tb = (goy + height - oy) / dy
            if ta > tb:
                ta, tb = tb, ta
            if ta > t_enter:
                t_enter = ta
            if tb < t_exit:
                t_exit = tb
        elif oy < goy or oy > goy + height:
            ok = False
        if t_enter > t_exit:
            ok = False

        if ok:
            px = ox + (t_enter + 1e-9) * dx
            py = oy + (t_enter + 1e-9) * dy
            j = int((px - gox) // _GRID_CELL)
            i = int((py - goy) // _GRID_CELL)
            if j < 0:
                j = 0
            elif j >= gnx:
                j = gnx - 1
            if i < 0:
                i = 0
            elif i >= gny:
                i = gny - 1
            step_j = 1 if dx > 0 else -1
            step_i = 1 if dy > 0 else -1
            if abs(dx) > 1e-15:
                nxb = gox + (j + (1 if dx > 0 else 0)) * _GRID_CELL
                t_max_x = (nxb - ox) / dx
                t_dx = _GRID_CELL / abs(dx)
            else:
                t_max_x = 1e30
                t_dx = 1e30
            if abs(dy) > 1e-15:
                nyb = goy + (i + (1 if dy > 0 else 0)) * _GRID_CELL
                t_max_y = (nyb - oy) / dy
                t_dy = _GRID_CELL / abs(dy)
            else:
                t_max_y = 1e30
                t_dy = 1e30
            guard = 2 * (gnx + gny) + 4
            while guard > 0:
                guard -= 1
                cell = i * gnx + j
                for n in range(cp_offs[cell], cp_offs[cell + 1]):
                    k = cp_idx[n]
                    t, wx, wy, wz = _ray_prisms(ox, oy, oz, dx, dy, dz, best_t,
                                                p_verts, p_offs[k], p_offs[k + 1], p_h[k])
                    if t > 0.0:
                        best_t = t
                        best_id = p_ids[k]
                        bnx, bny, bnz = wx, wy, wz
                for n in range(cc_offs[cell], cc_offs[cell + 1]):
                    k = cc_idx[n]
                    t, wx, wy, wz = _ray_cylinder(ox, oy, oz, dx, dy, dz, best_t,
                                                  c_xyrh[k, 0], c_xyrh[k, 1],
                                                  c_xyrh[k, 2], c_xyrh[k, 3])
                    if t > 0.0:
                        best_t = t
                        best_id = c_ids[k]
                        bnx, bny, bnz = wx, wy, wz
                for n in range(dpc_offs[cell], dpc_offs[cell + 1]):
                    k = dpc_idx[n]
                    t, wx, wy, wz = _ray_prisms(ox, oy, oz, dx, dy, dz, best_t,
                                                dp_verts, dp_offs[k], dp_offs[k + 1], dp_h[k])
                    if t > 0.0:
                        best_t = t
                        best_id = dp_ids[k]
                        bnx, bny, bnz = wx, wy, wz
                for n in range(dcc_offs[cell], dcc_offs[cell + 1]):
                    k = dcc_idx[n]
                    t, wx, wy, wz = _ray_cylinder(ox, oy, oz, dx, dy, dz, best_t,
                                                  dc_xyrh[k, 0], dc_xyrh[k, 1],
                                                  dc_xyrh[k, 2], dc_xyrh[k, 3])
                    if t > 0.0:
                        best_t = t
                        best_id = dc_ids[k]
                        bnx, bny, bnz = wx, wy, wz
                t_exit_cell = t_max_x if t_max_x < t_max_y else t_max_y
                if t_exit_cell > t_exit:
                    t_exit_cell = t_exit
                if best_t <= t_exit_cell + 1e-9 or t_exit_cell >= t_hi:
                    break
                if t_max_x < t_max_y:
                    j += step_j
                    t_max_x += t_dx
                else:
                    i += step_i
                    t_max_y += t_dy
                if j < 0 or j >= gnx or i < 0 or i >= gny:
                    break

        if ground_t < best_t:
            gx = ox + ground_t * dx
            gy = oy + ground_t * dy
            best_t = ground_t
            best_id = _resolve_decal(gx, gy, gox, goy, gnx, gny,
                                     cw_par, cw_ids, gcw_offs, gcw_idx,
                                     st_par, st_ids, gst_offs, gst_idx, ground_id)
            bnx, bny, bnz = 0.0, 0.0, 1.0

        if best_t >= max_range:
            out_t[r] = max_range
            out_id[r] = 0
            out_n[r, 0] = 0.0
            out_n[r, 1] = 0.0
            out_n[r, 2] = 0.0
        else:
            out_t[r] = best_t
            out_id[r] = best_id
            out_n[r, 0] = bnx
            out_n[r, 1] = bny
            out_n[r, 2] = bnz


def cast_rays(snapshot, origins: np.ndarray, dirs: np.ndarray, max_range: float):
    """Nearest-hit query for arbitrary rays; returns (range, id, normal)."""
    packed = _packed_static(snapshot.scene)
    dyn = _PackedDynamic(packed, snapshot.obstacles)
    n = origins.shape[0]
    out_t = np.empty(n, dtype=np.float64)
    out_id = np.empty(n, dtype=np.int64)
    out_n = np.empty((n, 3), dtype=np.float64)
    _cast_kernel(
        np.ascontiguousarray(origins, dtype=np.float64),
        np.ascontiguousarray(dirs, dtype=np.float64),
        float(max_range),
        packed.p_verts, packed.p_offs, packed.p_h, packed.p_ids,
        packed.c_xyrh, packed.c_ids,
        float(packed.ox), float(packed.oy), packed.nx, packed.ny,
        packed.cp_offs, packed.cp_idx, packed.cc_offs, packed.cc_idx,
        dyn.p_verts, dyn.p_offs, dyn.p_h, dyn.p_ids, dyn.dp_offs, dyn.dp_idx,
        dyn.c_xyrh, dyn.c_ids, dyn.dc_offs, dyn.dc_idx,
        packed.cw_par, packed.cw_ids, packed.gcw_offs, packed.gcw_idx,
        packed.st_par, packed.st_ids, packed.gst_offs, packed.gst_idx,
        packed.ground_id,
        out_t, out_id, out_n,
    )
    return out_t, out_id, out_n


# ---------------------------------------------------------------------------
# poses and rays


def _rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def body_rotation(attitude) -> np.ndarray:
    roll, pitch, yaw = attitude
    return _rot_z(yaw) @ _rot_y(pitch) @ _rot_x(roll)


def camera_rotation(attitude, camera_angles) -> np.ndarray:
    pan, tilt = camera_angles
    return body_rotation(attitude) @ _rot_z(pan) @ _rot_y(tilt)


def camera_rays(state, camera: CameraModel) -> tuple[np.ndarray, np.ndarray]:
    """World-frame origin and per-pixel unit directions, row-major."""
    w, h = camera.width, camera.height
    tan_h = math.tan(camera.horizontal_fov / 2)
    tan_v = tan_h * h / w
    u = (np.arange(w) + 0.5) / w * 2.0 - 1.0
    v = (np.arange(h) + 0.5) / h * 2.0 - 1.0
    yy = -u * tan_h  # +y is left; image x runs right
    zz = -v * tan_v  # +z is up; image y runs down
    dirs = np.empty((h, w, 3), dtype=np.float64)
    dirs[:, :, 0] = 1.0
    dirs[:, :, 1] = yy[None, :]
    dirs[:, :, 2] = zz[:, None]
    dirs /= np.linalg.norm(dirs, axis=2, keepdims=True)
    rot = camera_rotation(state.attitude, state.camera)
    world = dirs.reshape(-1, 3) @ rot.T
    origin = np.array([state.position[0], state.position[1],
                       state.position[2] + MOUNT_HEIGHT[state.kind]], dtype=np.float64)
    origins = np.broadcast_to(origin, (h * w, 3))
    return origins, world


# ---------------------------------------------------------------------------
# sensor ops


def render(snapshot, agent_id: str, camera: CameraModel | None = None,
           channels=("depth", "segmentation", "color")) -> dict:
    state = _agent(snapshot, agent_id)
    camera = camera or CameraModel()
    channels = set(channels)
    unknown = channels - {"depth", "segmentation", "color"}
    if unknown:
        raise SensorError(f"unknown render channels {sorted(unknown)}")
    origins, dirs = camera_rays(state, camera)
    t, ids, normals = cast_rays(snapshot, origins, dirs, DEPTH_SATURATION_M)
    h, w = camera.height, camera.width
    out = {}
    hit = ids > 0
    if "depth" in channels:
        mm = np.where(hit, np.minimum(np.floor(t * 1000.0 + 0.5), 65534.0), 65535.0)
        out["depth"] = mm.astype(np.uint16).reshape(h, w)
    if "segmentation" in channels:
        out["segmentation"] = ids.astype(np.uint16).reshape(h, w)
    if "color" in channels:
        packed = _packed_static(snapshot.scene)
        lut = packed.color_lut.copy()
        for ob in snapshot.obstacles:
            lut[ob.id] = ob.color
        lambert = np.maximum(normals @ np.array(SUN_DIR), 0.0)
        shade = np.where(hit, AMBIENT + (1.0 - AMBIENT) * lambert, 1.0)
        rgb = np.floor(lut[ids].astype(np.float64) * shade[:, None] + 0.5)
        out["color"] = rgb.astype(np.uint8).reshape(h, w, 3)
    return out


def lidar(snapshot, agent_id: str) -> LidarScan:
    state = _agent(snapshot, agent_id)
    elevs = np.deg2rad(LIDAR_ELEVATIONS_DEG)
    az = np.deg2rad(np.arange(LIDAR_AZIMUTH_STEPS, dtype=np.float64))
    ce, se = np.cos(elevs), np.sin(elevs)
    ca, sa = np.cos(az), np.sin(az)
    body = np.empty((LIDAR_RINGS, LIDAR_AZIMUTH_STEPS, 3), dtype=np.float64)
    body[:, :, 0] = ce[:, None] * ca[None, :]
    body[:, :, 1] = ce[:, None] * sa[None, :]
    body[:, :, 2] = se[:, None]
    body = body.reshape(-1, 3)
    rot = body_rotation(state.attitude)
    world = body @ rot.T
    origin = np.array([state.position[0], state.position[1],
                       state.position[2] + MOUNT_HEIGHT[state.kind]], dtype=np.float64)
    origins = np.broadcast_to(origin, (body.shape[0], 3))
    t, ids, _ = cast_rays(snapshot, origins, world, LIDAR_MAX_RANGE)
    mask = ids > 0
    pts = (body[mask] * t[mask, None]).astype(np.float32)
    return LidarScan(points=pts)


def gps_fix(scene: SceneGraph, position) -> dict:
    lat0, lon0 = scene.origin_anchor
    lat = lat0 + position[1] / GPS_M_PER_DEG_LAT
    lon = lon0 + position[0] / (GPS_M_PER_DEG_LON * math.cos(math.radians(lat0)))
    return {"lat": lat, "lon": lon, "alt": position[2]}


def gps_to_world(scene: SceneGraph, lat: float, lon: float, alt: float = 0.0):
    lat0, lon0 = scene.origin_anchor
    y = (lat - lat0) * GPS_M_PER_DEG_LAT
    x = (lon - lon0) * GPS_M_PER_DEG_LON * math.cos(math.radians(lat0))
    return (x, y, alt)


def state_report(state, tick_count: int, sim_time: float) -> dict:
    doc = {
        "agent_id": state.agent_id,
        "kind": state.kind,
        "tick_count": tick_count,
        "sim_time": sim_time,
        "position": list(state.position),
        "velocity": list(state.velocity),
        "speed": state.speed(),
        "attitude": list(state.attitude),
        "camera": list(state.camera),
        "collided": state.collided,
    }
    if state.kind == "vehicle":
        doc["wheel_angle"] = state.wheel_angle
        doc["gear"] = state.gear
        doc["throttle"] = state.throttle
        doc["brake"] = state.brake
    else:
        doc["armed"] = state.armed
    return doc


def observe(snapshot, agent_id: str, sensors, camera: CameraModel | None = None,
            imu_sigma: float = 0.0, seed: int = 0) -> dict:
    """Observation bundle: requested sensors plus always the state report."""
    sensors = list(sensors)
    if not sensors:
        raise SensorError("sensor set must be non-empty")
    unknown = set(sensors) - set(SENSOR_NAMES)
    if unknown:
        raise SensorError(f"unknown sensors {sorted(unknown)}")
    state = _agent(snapshot, agent_id)
    bundle = {
        "tick_count": snapshot.tick_count,
        "state": state_report(state, snapshot.tick_count, snapshot.sim_time),
    }
    if "gps" in sensors:
        bundle["gps"] = gps_fix(snapshot.scene, state.position)
    if "imu" in sensors:
        accel, gyro = snapshot.imu[agent_id]
        if imu_sigma > 0.0:
            noise = rng.stream(seed, f"imu.{agent_id}.{snapshot.tick_count}")
            accel = tuple(a + noise.gauss(0.0, imu_sigma) for a in accel)
            gyro = tuple(g + noise.gauss(0.0, imu_sigma) for g in gyro)
        bundle["imu"] = {"accel": list(accel), "gyro": list(gyro)}
    raster_channels = [s for s in sensors if s in ("depth", "segmentation", "color")]
    if raster_channels:
        bundle.update(render(snapshot, agent_id, camera, raster_channels))
    if "lidar" in sensors:
        bundle["lidar"] = lidar(snapshot, agent_id)
    return bundle


def _agent(snapshot, agent_id: str):
    state = snapshot.agents.get(agent_id)
    if state is None:
        raise SensorError(f"unknown agent {agent_id!r}")
    return state
