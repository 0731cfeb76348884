"""Exact grid traversal (Amanatides-Woo) for 2-D floors and 3-D voxel volumes.

Rays are parameterised as ``origin + s * direction`` where ``direction`` is
not normalised; callers pick the scale so that ``s`` is the camera z-depth.
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np


@nb.njit(cache=True)
def _axis_setup(p, d, res, cell):
    if d > 0.0:
        step = 1
        t_max = ((cell + 1) * res - p) / d
        t_delta = res / d
    elif d < 0.0:
        step = -1
        t_max = (cell * res - p) / d
        t_delta = -res / d
    else:
        step = 0
        t_max = np.inf
        t_delta = np.inf
    return step, t_max, t_delta


@nb.njit(cache=True)
def cast_2d(occ, res, px, py, dx, dy, s_max):
    """First occupied cell along the ray. Returns (s_hit, row, col); s_hit = inf on no return."""
    H, W = occ.shape
    c = int(math.floor(px / res))
    r = int(math.floor(py / res))
    if r < 0 or r >= H or c < 0 or c >= W:
        return np.inf, -1, -1
    if occ[r, c]:
        return 0.0, r, c
    sx, tx, dtx = _axis_setup(px, dx, res, c)
    sy, ty, dty = _axis_setup(py, dy, res, r)
    while True:
        if tx < ty:
            s = tx
            c += sx
            tx += dtx
        else:
            s = ty
            r += sy
            ty += dty
        if s > s_max:
            return np.inf, -1, -1
        if r < 0 or r >= H or c < 0 or c >= W:
            return np.inf, -1, -1
        if occ[r, c]:
            return s, r, c


@nb.njit(cache=True)
def render_columns(occ, labels, res, px, py, fx_, fy_, rx, ry, cx, fx, width, max_range):
    """Per-column z-depth and hit label for a level camera with forward (fx_, fy_) and right (rx, ry)."""
    depth = np.empty(width, np.float64)
    lab = np.zeros(width, np.int32)
    for u in range(width):
        a = (u - cx) / fx
        dx = fx_ + a * rx
        dy = fy_ + a * ry
        s_max = max_range / math.sqrt(1.0 + a * a)
        s, r, c = cast_2d(occ, res, px, py, dx, dy, s_max)
        depth[u] = s
        if r >= 0:
            lab[u] = labels[r, c]
    return depth, lab


@nb.njit(cache=True)
def cast_3d(occ, res, px, py, pz, dx, dy, dz, s_max):
    """First occupied voxel along the ray in an occupancy volume indexed [z, y, x]."""
    D, H, W = occ.shape
    i = int(math.floor(px / res))
    j = int(math.floor(py / res))
    k = int(math.floor(pz / res))
    if i < 0 or i >= W or j < 0 or j >= H or k < 0 or k >= D:
        return np.inf, -1, -1, -1
    if occ[k, j, i]:
        return 0.0, k, j, i
    si, ti, dti = _axis_setup(px, dx, res, i)
    sj, tj, dtj = _axis_setup(py, dy, res, j)
    sk, tk, dtk = _axis_setup(pz, dz, res, k)
    while True:
        if ti <= tj and ti <= tk:
            s = ti
            i += si
            ti += dti
        elif tj <= tk:
            s = tj
            j += sj
            tj += dtj
        else:
            s = tk
            k += sk
            tk += dtk
        if s > s_max:
            return np.inf, -1, -1, -1
        if i < 0 or i >= W or j < 0 or j >= H or k < 0 or k >= D:
            return np.inf, -1, -1, -1
        if occ[k, j, i]:
            return s, k, j, i


@nb.njit(cache=True)
def render_pixels_3d(occ, labels, res, origin, right, down, fwd, cx, cy, fx, fy, width, height, max_range):
    depth = np.empty((height, width), np.float64)
    lab = np.zeros((height, width), np.int32)
    for v in range(height):
        b = (v - cy) / fy
        for u in range(width):
            a = (u - cx) / fx
            dx = fwd[0] + a * right[0] + b * down[0]
            dy = fwd[1] + a * right[1] + b * down[1]
            dz = fwd[2] + a * right[2] + b * down[2]
            s_max = max_range / math.sqrt(1.0 + a * a + b * b)
            s, k, j, i = cast_3d(occ, res, origin[0], origin[1], origin[2], dx, dy, dz, s_max)
            depth[v, u] = s
            if k >= 0:
                lab[v, u] = labels[k, j, i]
    return depth, lab


@nb.njit(cache=True)
def segment_clear_3d(occ, res, ax, ay, az, bx, by, bz):
    """True iff every voxel the segment a->b passes through is free (in-bounds)."""
    D, H, W = occ.shape
    dx = bx - ax
    dy = by - ay
    dz = bz - az
    i = int(math.floor(ax / res))
    j = int(math.floor(ay / res))
    k = int(math.floor(az / res))
    ie = int(math.floor(bx / res))
    je = int(math.floor(by / res))
    ke = int(math.floor(bz / res))
    if i < 0 or i >= W or j < 0 or j >= H or k < 0 or k >= D:
        return False
    if occ[k, j, i]:
        return False
    si, ti, dti = _axis_setup(ax, dx, res, i)
    sj, tj, dtj = _axis_setup(ay, dy, res, j)
    sk, tk, dtk = _axis_setup(az, dz, res, k)
    while not (i == ie and j == je and k == ke):
        if ti <= tj and ti <= tk:
            s = ti
            i += si
            ti += dti
        elif tj <= tk:
            s = tj
            j += sj
            tj += dtj
        else:
            s = tk
            k += sk
            tk += dtk
        if s > 1.0:
            break
        if i < 0 or i >= W or j < 0 or j >= H or k < 0 or k >= D:
            return False
        if occ[k, j, i]:
            return False
    return True


@nb.njit(cache=True)
def segment_clear_2d(blocked, res, ox, oy, ax, ay, bx, by):
    """True iff every cell the segment a->b passes through is unblocked; grid origin (ox, oy)."""
    H, W = blocked.shape
    ax -= ox
    ay -= oy
    bx -= ox
    by -= oy
    dx = bx - ax
    dy = by - ay
    c = int(math.floor(ax / res))
    r = int(math.floor(ay / res))
    ce = int(math.floor(bx / res))
    re = int(math.floor(by / res))
    if r < 0 or r >= H or c < 0 or c >= W or blocked[r, c]:
        return False
    sx, tx, dtx = _axis_setup(ax, dx, res, c)
    sy, ty, dty = _axis_setup(ay, dy, res, r)
    while not (r == re and c == ce):
        if tx < ty:
            s = tx
            c += sx
            tx += dtx
        else:
            s = ty
            r += sy
            ty += dty
        if s > 1.0:
            break
        if r < 0 or r >= H or c < 0 or c >= W or blocked[r, c]:
            return False
    return True
