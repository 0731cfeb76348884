"""Fast-Marching eikonal solver and steepest-descent path extraction on 2-D grids.

The solver is first-order upwind with two stencils per update (the axis
pair and the 45-degree diagonal pair, spacing h*sqrt(2)); the smaller of the
two admissible solutions is kept. Diagonal updates never cut an obstacle
corner. Speed is uniform over passable cells.
"""

from __future__ import annotations

import heapq
import math

import numba as nb
import numpy as np

SQRT2 = math.sqrt(2.0)


@nb.njit(cache=True)
def _quadratic(a, b, h):
    if abs(a - b) < h:
        return 0.5 * (a + b + math.sqrt(2.0 * h * h - (a - b) * (a - b)))
    return min(a, b) + h


@nb.njit(cache=True)
def _march(passable, init, h, stop_r, stop_c):
    H, W = passable.shape
    limit = np.inf
    T = init.copy()
    state = np.zeros((H, W), np.int8)  # 0 far, 1 trial, 2 frozen
    heap = [(0.0, 0)]
    heap.pop()
    for r in range(H):
        for c in range(W):
            if not passable[r, c]:
                T[r, c] = np.inf
            elif T[r, c] < np.inf:
                state[r, c] = 1
                heapq.heappush(heap, (T[r, c], r * W + c))
    hd = h * math.sqrt(2.0)
    while len(heap) > 0:
        t, idx = heapq.heappop(heap)
        r = idx // W
        c = idx - r * W
        if state[r, c] == 2 or t > T[r, c]:
            continue
        if t > limit:
            break
        state[r, c] = 2
        if r == stop_r and c == stop_c:
            limit = t + 2.0 * h
        for dr in range(-1, 2):
            for dc in range(-1, 2):
                if dr == 0 and dc == 0:
                    continue
                rr = r + dr
                cc = c + dc
                if rr < 0 or rr >= H or cc < 0 or cc >= W:
                    continue
                if not passable[rr, cc] or state[rr, cc] == 2:
                    continue
                a = np.inf
                b = np.inf
                if cc > 0 and state[rr, cc - 1] == 2:
                    a = T[rr, cc - 1]
                if cc < W - 1 and state[rr, cc + 1] == 2:
                    a = min(a, T[rr, cc + 1])
                if rr > 0 and state[rr - 1, cc] == 2:
                    b = T[rr - 1, cc]
                if rr < H - 1 and state[rr + 1, cc] == 2:
                    b = min(b, T[rr + 1, cc])
                nt = np.inf
                if min(a, b) < np.inf:
                    nt = _quadratic(a, b, h)
                p = np.inf
                q = np.inf
                for s in (-1, 1):
                    r2 = rr + s
                    if r2 < 0 or r2 >= H:
                        continue
                    c2 = cc + s
                    if 0 <= c2 < W and state[r2, c2] == 2 and passable[r2, cc] and passable[rr, c2]:
                        p = min(p, T[r2, c2])
                    c2 = cc - s
                    if 0 <= c2 < W and state[r2, c2] == 2 and passable[r2, cc] and passable[rr, c2]:
                        q = min(q, T[r2, c2])
                if min(p, q) < np.inf:
                    nt = min(nt, _quadratic(p, q, hd))
                if nt < T[rr, cc]:
                    T[rr, cc] = nt
                    state[rr, cc] = 1
                    heapq.heappush(heap, (nt, rr * W + cc))
    return T


def march(passable: np.ndarray, init: np.ndarray, h: float, stop=None) -> np.ndarray:
    """Arrival-time field from the finite entries of ``init`` (multi-source, seeded values).

    Impassable cells and cells not connected to any source come back as inf.
    With ``stop=(r, c)`` the front halts two cells past that cell's arrival,
    which is enough for a descent from it; cells beyond keep tentative or inf
    values.
    """
    passable = np.ascontiguousarray(passable, dtype=np.bool_)
    init = np.ascontiguousarray(init, dtype=np.float64)
    if passable.shape != init.shape:
        raise ValueError("passable/init shape mismatch")
    sr, sc = stop if stop is not None else (-1, -1)
    return _march(passable, init, float(h), int(sr), int(sc))


_NEIGHBOURS = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


@nb.njit(cache=True)
def _descend(T, passable, r, c, max_len):
    H, W = T.shape
    out = np.empty((max_len, 2), np.int64)
    n = 0
    out[n, 0] = r
    out[n, 1] = c
    n += 1
    while T[r, c] > 0.0 and n < max_len:
        best = T[r, c]
        br = -1
        bc = -1
        for dr in range(-1, 2):
            for dc in range(-1, 2):
                if dr == 0 and dc == 0:
                    continue
                rr = r + dr
                cc = c + dc
                if rr < 0 or rr >= H or cc < 0 or cc >= W:
                    continue
                if not passable[rr, cc]:
                    continue
                if dr != 0 and dc != 0 and not (passable[r + dr, c] and passable[r, c + dc]):
                    continue
                if T[rr, cc] < best:
                    best = T[rr, cc]
                    br = rr
                    bc = cc
        if br < 0:
            break
        r = br
        c = bc
        out[n, 0] = r
        out[n, 1] = c
        n += 1
    return out[:n]


def descend(field: np.ndarray, passable: np.ndarray, cell: tuple[int, int]) -> np.ndarray:
    """Cells visited by a one-cell-per-step steepest descent from ``cell`` to a source.

    Each step moves to the lowest-valued 8-neighbour (no corner cutting), so
    the field strictly decreases along the walk.
    """
    r, c = cell
    max_len = field.size + 1
    return _descend(field, np.ascontiguousarray(passable, dtype=np.bool_), int(r), int(c), max_len)


def inflate(occupied: np.ndarray, radius_cells: float) -> np.ndarray:
    """Dilate an obstacle mask by a Euclidean radius given in cells."""
    if radius_cells <= 0:
        return occupied.copy()
    from scipy import ndimage

    k = int(math.ceil(radius_cells))
    yy, xx = np.mgrid[-k : k + 1, -k : k + 1]
    disk = (yy * yy + xx * xx) <= radius_cells * radius_cells + 1e-9
    return ndimage.binary_dilation(occupied, structure=disk)
