"""Numba voxel kernels shared by the world, mapping, planning and vehicle modules.

All ray traversals use the Amanatides & Woo DDA. Two lattices appear here:

* world lattice: cell ``i`` covers ``[origin + i*e, origin + (i+1)*e)``; cells
  outside the array are Solid (closed world).
* map lattice: global voxel ``g`` covers ``[g*e, (g+1)*e)``. Storage is a
  circular buffer: voxel ``g`` lives at ``g mod dims`` and is only valid when
  ``win <= g < win + dims``. Everything outside the window is Unknown.

Tri-state codes: 0 Unknown, 1 Free, 2 Occupied.
"""
import math

import numpy as np
from numba import njit

UNKNOWN = 0
FREE = 1
OCCUPIED = 2

STOP_OCCUPIED = 0
STOP_NOT_FREE = 1

STRICT = 0
OPTIMISTIC = 1

_INF = np.inf
_MAX_STEPS = 1 << 22


@njit(cache=True, inline="always")
def _axis_init(p, d, e):
    i = int(math.floor(p / e))
    if d > 0.0:
        return i, 1, ((i + 1) * e - p) / d, e / d
    if d < 0.0:
        return i, -1, (i * e - p) / d, -e / d
    return i, 0, _INF, _INF


@njit(cache=True, inline="always")
def _state(lo, wx, wy, wz, gx, gy, gz, occ_t, free_t):
    nx, ny, nz = lo.shape
    if gx < wx or gy < wy or gz < wz or gx >= wx + nx or gy >= wy + ny or gz >= wz + nz:
        return UNKNOWN
    v = lo[gx % nx, gy % ny, gz % nz]
    if v >= occ_t:
        return OCCUPIED
    if v <= free_t:
        return FREE
    return UNKNOWN


@njit(cache=True, inline="always")
def _add(lo, wx, wy, wz, gx, gy, gz, delta, l_min, l_max):
    nx, ny, nz = lo.shape
    if gx < wx or gy < wy or gz < wz or gx >= wx + nx or gy >= wy + ny or gz >= wz + nz:
        return
    ix = gx % nx
    iy = gy % ny
    iz = gz % nz
    v = lo[ix, iy, iz] + delta
    if v > l_max:
        v = l_max
    elif v < l_min:
        v = l_min
    lo[ix, iy, iz] = v


# --------------------------------------------------------------------------- world


@njit(cache=True)
def world_cast(solid, origin, e, p, d, max_range):
    """Distance to the entry face of the first Solid cell, or -1 on a miss."""
    nx, ny, nz = solid.shape
    ix, sx, tx, dx = _axis_init(p[0] - origin[0], d[0], e)
    iy, sy, ty, dy = _axis_init(p[1] - origin[1], d[1], e)
    iz, sz, tz, dz = _axis_init(p[2] - origin[2], d[2], e)
    t = 0.0
    for _ in range(_MAX_STEPS):
        if ix < 0 or iy < 0 or iz < 0 or ix >= nx or iy >= ny or iz >= nz:
            return t
        if solid[ix, iy, iz]:
            return t
        if tx <= ty and tx <= tz:
            t = tx
            tx += dx
            ix += sx
        elif ty <= tz:
            t = ty
            ty += dy
            iy += sy
        else:
            t = tz
            tz += dz
            iz += sz
        if t > max_range:
            return -1.0
    return -1.0


@njit(cache=True)
def world_cast_batch(solid, origin, e, p, dirs, max_range, spheres, radii):
    """Cast many rays; spheres (artifact bodies) also stop rays. Misses are -1."""
    n = dirs.shape[0]
    out = np.empty(n)
    for k in range(n):
        d = dirs[k]
        t = world_cast(solid, origin, e, p, d, max_range)
        for s in range(spheres.shape[0]):
            ox = p[0] - spheres[s, 0]
            oy = p[1] - spheres[s, 1]
            oz = p[2] - spheres[s, 2]
            b = ox * d[0] + oy * d[1] + oz * d[2]
            c = ox * ox + oy * oy + oz * oz - radii[s] * radii[s]
            if c <= 0.0:
                continue
            disc = b * b - c
            if disc < 0.0:
                continue
            ts = -b - math.sqrt(disc)
            if ts < 0.0 or ts > max_range:
                continue
            if t < 0.0 or ts < t:
                t = ts
        out[k] = t
    return out


@njit(cache=True)
def world_box_solid(solid, origin, e, lo_corner, hi_corner):
    """True if any Solid cell intersects the open box (lo_corner, hi_corner)."""
    nx, ny, nz = solid.shape
    i0 = int(math.floor((lo_corner[0] - origin[0]) / e))
    j0 = int(math.floor((lo_corner[1] - origin[1]) / e))
    k0 = int(math.floor((lo_corner[2] - origin[2]) / e))
    i1 = int(math.ceil((hi_corner[0] - origin[0]) / e)) - 1
    j1 = int(math.ceil((hi_corner[1] - origin[1]) / e)) - 1
    k1 = int(math.ceil((hi_corner[2] - origin[2]) / e)) - 1
    for i in range(i0, i1 + 1):
        for j in range(j0, j1 + 1):
            for k in range(k0, k1 + 1):
                if i < 0 or j < 0 or k < 0 or i >= nx or j >= ny or k >= nz:
                    return True
                if solid[i, j, k]:
                    return True
    return False


@njit(cache=True)
def world_blocking_face(solid, origin, e, lo_corner, hi_corner, axis, sign, front):
    """Nearest Solid face hit when a box moving along ``axis`` reaches (lo, hi).

    Only cells lying beyond ``front`` (the leading face before the move) count,
    so overlap that predates the move never produces a contact. Returns the
    face coordinate or NaN when nothing blocks.
    """
    nx, ny, nz = solid.shape
    i0 = int(math.floor((lo_corner[0] - origin[0]) / e))
    j0 = int(math.floor((lo_corner[1] - origin[1]) / e))
    k0 = int(math.floor((lo_corner[2] - origin[2]) / e))
    i1 = int(math.ceil((hi_corner[0] - origin[0]) / e)) - 1
    j1 = int(math.ceil((hi_corner[1] - origin[1]) / e)) - 1
    k1 = int(math.ceil((hi_corner[2] - origin[2]) / e)) - 1
    best = np.nan
    tol = 1e-9
    for i in range(i0, i1 + 1):
        for j in range(j0, j1 + 1):
            for k in range(k0, k1 + 1):
                blocked = i < 0 or j < 0 or k < 0 or i >= nx or j >= ny or k >= nz
                if not blocked:
                    blocked = solid[i, j, k] != 0
                if not blocked:
                    continue
                idx = i if axis == 0 else (j if axis == 1 else k)
                if sign > 0:
                    face = origin[axis] + idx * e
                    if face >= front - tol and (math.isnan(best) or face < best):
                        best = face
                else:
                    face = origin[axis] + (idx + 1) * e
                    if face <= front + tol and (math.isnan(best) or face > best):
                        best = face
    return best


# --------------------------------------------------------------------------- map


@njit(cache=True)
def integrate_rays(lo, win, e, o, ends, hits, l_hit, l_miss, l_min, l_max):
    """Log-odds update: l_miss along each ray, l_hit at the end voxel of hits."""
    wx, wy, wz = win[0], win[1], win[2]
    eps = 1e-6
    for r in range(ends.shape[0]):
        vx = ends[r, 0] - o[0]
        vy = ends[r, 1] - o[1]
        vz = ends[r, 2] - o[2]
        length = math.sqrt(vx * vx + vy * vy + vz * vz)
        if length == 0.0:
            gx = int(math.floor(o[0] / e))
            gy = int(math.floor(o[1] / e))
            gz = int(math.floor(o[2] / e))
            _add(lo, wx, wy, wz, gx, gy, gz, l_hit if hits[r] else l_miss, l_min, l_max)
            continue
        ix, sx, tx, dx = _axis_init(o[0], vx / length, e)
        iy, sy, ty, dy = _axis_init(o[1], vy / length, e)
        iz, sz, tz, dz = _axis_init(o[2], vz / length, e)
        for _ in range(_MAX_STEPS):
            t_exit = min(tx, ty, tz)
            if t_exit > length + eps:
                break
            _add(lo, wx, wy, wz, ix, iy, iz, l_miss, l_min, l_max)
            if tx <= ty and tx <= tz:
                tx += dx
                ix += sx
            elif ty <= tz:
                ty += dy
                iy += sy
            else:
                tz += dz
                iz += sz
        _add(lo, wx, wy, wz, ix, iy, iz, l_hit if hits[r] else l_miss, l_min, l_max)


@njit(cache=True)
def raycast(lo, win, e, occ_t, free_t, o, d, max_range, stop_mode):
    """First voxel satisfying the stop predicate: (hit, t_entry, gx, gy, gz)."""
    wx, wy, wz = win[0], win[1], win[2]
    ix, sx, tx, dx = _axis_init(o[0], d[0], e)
    iy, sy, ty, dy = _axis_init(o[1], d[1], e)
    iz, sz, tz, dz = _axis_init(o[2], d[2], e)
    t = 0.0
    for _ in range(_MAX_STEPS):
        s = _state(lo, wx, wy, wz, ix, iy, iz, occ_t, free_t)
        if (stop_mode == STOP_OCCUPIED and s == OCCUPIED) or (
            stop_mode == STOP_NOT_FREE and s != FREE
        ):
            return True, t, ix, iy, iz
        if tx <= ty and tx <= tz:
            t = tx
            tx += dx
            ix += sx
        elif ty <= tz:
            t = ty
            ty += dy
            iy += sy
        else:
            t = tz
            tz += dz
            iz += sz
        if t > max_range:
            break
    return False, t, ix, iy, iz


@njit(cache=True)
def _visible(lo, wx, wy, wz, e, occ_t, free_t, vp, gx, gy, gz, cx, cy, cz, dist):
    ix, sx, tx, dx = _axis_init(vp[0], cx / dist, e)
    iy, sy, ty, dy = _axis_init(vp[1], cy / dist, e)
    iz, sz, tz, dz = _axis_init(vp[2], cz / dist, e)
    for _ in range(_MAX_STEPS):
        if ix == gx and iy == gy and iz == gz:
            return True
        if _state(lo, wx, wy, wz, ix, iy, iz, occ_t, free_t) == OCCUPIED:
            return False
        if tx <= ty and tx <= tz:
            t = tx
            tx += dx
            ix += sx
        elif ty <= tz:
            t = ty
            ty += dy
            iy += sy
        else:
            t = tz
            tz += dz
            iz += sz
        if t > dist + e:
            return True
    return True


@njit(cache=True)
def count_unknown(lo, win, e, occ_t, free_t, vp, yaw, fov_az, fov_el, max_range):
    """Unknown voxels whose centers are in the frustum and not occluded."""
    wx, wy, wz = win[0], win[1], win[2]
    nx, ny, nz = lo.shape
    g0x = max(wx, int(math.floor((vp[0] - max_range) / e)))
    g0y = max(wy, int(math.floor((vp[1] - max_range) / e)))
    g0z = max(wz, int(math.floor((vp[2] - max_range) / e)))
    g1x = min(wx + nx - 1, int(math.floor((vp[0] + max_range) / e)))
    g1y = min(wy + ny - 1, int(math.floor((vp[1] + max_range) / e)))
    g1z = min(wz + nz - 1, int(math.floor((vp[2] + max_range) / e)))
    half_az = 0.5 * fov_az
    half_el = 0.5 * fov_el
    full_az = fov_az >= 2.0 * math.pi
    count = 0
    for gx in range(g0x, g1x + 1):
        cx = (gx + 0.5) * e - vp[0]
        for gy in range(g0y, g1y + 1):
            cy = (gy + 0.5) * e - vp[1]
            horiz = math.sqrt(cx * cx + cy * cy)
            if not full_az:
                rel = math.atan2(cy, cx) - yaw
                rel = math.atan2(math.sin(rel), math.cos(rel))
                if abs(rel) > half_az:
                    continue
            for gz in range(g0z, g1z + 1):
                if _state(lo, wx, wy, wz, gx, gy, gz, occ_t, free_t) != UNKNOWN:
                    continue
                cz = (gz + 0.5) * e - vp[2]
                dist = math.sqrt(cx * cx + cy * cy + cz * cz)
                if dist > max_range:
                    continue
                if abs(math.atan2(cz, horiz)) > half_el:
                    continue
                if dist == 0.0 or _visible(
                    lo, wx, wy, wz, e, occ_t, free_t, vp, gx, gy, gz, cx, cy, cz, dist
                ):
                    count += 1
    return count


@njit(cache=True)
def box_allowed(lo, win, e, occ_t, free_t, lo_corner, hi_corner, policy):
    """Every voxel intersecting the open box is Free (strict) or not Occupied."""
    wx, wy, wz = win[0], win[1], win[2]
    i0 = int(math.floor(lo_corner[0] / e))
    j0 = int(math.floor(lo_corner[1] / e))
    k0 = int(math.floor(lo_corner[2] / e))
    i1 = int(math.ceil(hi_corner[0] / e)) - 1
    j1 = int(math.ceil(hi_corner[1] / e)) - 1
    k1 = int(math.ceil(hi_corner[2] / e)) - 1
    for i in range(i0, i1 + 1):
        for j in range(j0, j1 + 1):
            for k in range(k0, k1 + 1):
                s = _state(lo, wx, wy, wz, i, j, k, occ_t, free_t)
                if s == OCCUPIED or (policy == STRICT and s == UNKNOWN):
                    return False
    return True


@njit(cache=True)
def segment_allowed(lo, win, e, occ_t, free_t, p0, p1, half, policy):
    """Swept-cuboid check: bounding boxes of consecutive ½-voxel samples."""
    length = math.sqrt((p1[0] - p0[0]) ** 2 + (p1[1] - p0[1]) ** 2 + (p1[2] - p0[2]) ** 2)
    n = max(1, int(math.ceil(length / (0.5 * e))))
    a = np.empty(3)
    b = np.empty(3)
    blo = np.empty(3)
    bhi = np.empty(3)
    for s in range(n):
        f0 = s / n
        f1 = (s + 1) / n
        for ax in range(3):
            a[ax] = p0[ax] + (p1[ax] - p0[ax]) * f0
            b[ax] = p0[ax] + (p1[ax] - p0[ax]) * f1
            blo[ax] = min(a[ax], b[ax]) - half[ax]
            bhi[ax] = max(a[ax], b[ax]) + half[ax]
        if not box_allowed(lo, win, e, occ_t, free_t, blo, bhi, policy):
            return False
    return True


@njit(cache=True)
def clearance(lo, win, e, occ_t, free_t, p, max_dist):
    """Distance from p to the nearest Occupied voxel box, capped at max_dist."""
    wx, wy, wz = win[0], win[1], win[2]
    best2 = max_dist * max_dist
    i0 = int(math.floor((p[0] - max_dist) / e))
    j0 = int(math.floor((p[1] - max_dist) / e))
    k0 = int(math.floor((p[2] - max_dist) / e))
    i1 = int(math.floor((p[0] + max_dist) / e))
    j1 = int(math.floor((p[1] + max_dist) / e))
    k1 = int(math.floor((p[2] + max_dist) / e))
    for i in range(i0, i1 + 1):
        ddx = max(i * e - p[0], 0.0, p[0] - (i + 1) * e)
        for j in range(j0, j1 + 1):
            ddy = max(j * e - p[1], 0.0, p[1] - (j + 1) * e)
            base = ddx * ddx + ddy * ddy
            if base >= best2:
                continue
            for k in range(k0, k1 + 1):
                ddz = max(k * e - p[2], 0.0, p[2] - (k + 1) * e)
                d2 = base + ddz * ddz
                if d2 < best2 and _state(lo, wx, wy, wz, i, j, k, occ_t, free_t) == OCCUPIED:
                    best2 = d2
    return math.sqrt(best2)
