"""Agent-side belief maps accumulated from depth observations."""

from __future__ import annotations

import math

import numba as nb
import numpy as np

from .geometry import Pose, camera_axes, normalize_yaw
from .world.model import BAND_TOP, PanoramaObservation, View

UNKNOWN = -1
FREE = 0
OCCUPIED = 1


@nb.njit(cache=True)
def _axis(p, d, res, cell):
    if d > 0.0:
        return 1, ((cell + 1) * res - p) / d, res / d
    if d < 0.0:
        return -1, (cell * res - p) / d, -res / d
    return 0, np.inf, np.inf


@nb.njit(cache=True)
def _integrate_columns(cells, r0, c0, res, px, py, fx_, fy_, rx, ry, cx, fx, depth, max_range):
    H, W = cells.shape
    for u in range(depth.shape[0]):
        a = (u - cx) / fx
        dx = fx_ + a * rx
        dy = fy_ + a * ry
        s_hit = depth[u]
        hit = s_hit < np.inf
        s_end = s_hit if hit else max_range / math.sqrt(1.0 + a * a)
        c = int(math.floor(px / res))
        r = int(math.floor(py / res))
        sx, tx, dtx = _axis(px, dx, res, c)
        sy, ty, dty = _axis(py, dy, res, r)
        s = 0.0
        while True:
            lr = r - r0
            lc = c - c0
            inside = 0 <= lr < H and 0 <= lc < W
            # a corner crossing steps twice at the same parameter; the renderer tests after both
            if hit and s >= s_hit and min(tx, ty) > s_hit:
                if inside:
                    cells[lr, lc] = 1
                break
            if inside and cells[lr, lc] != 1:
                cells[lr, lc] = 0
            if tx < ty:
                s = tx
                c += sx
                tx += dtx
            else:
                s = ty
                r += sy
                ty += dty
            if not hit and s > s_end:
                break


class OccupancyGrid:
    """2-D tri-state grid aligned to the world cell lattice; grows on demand.

    ``origin_cell`` is the (row, col) of the world lattice cell stored at
    index (0, 0), so belief and truth share cell boundaries exactly.
    """

    def __init__(self, resolution: float, origin_cell=(0, 0), shape=(0, 0)):
        self.resolution = float(resolution)
        self.origin_cell = (int(origin_cell[0]), int(origin_cell[1]))
        self.cells = np.full(shape, UNKNOWN, np.int8)

    @property
    def origin(self) -> tuple[float, float]:
        return (self.origin_cell[1] * self.resolution, self.origin_cell[0] * self.resolution)

    @property
    def shape(self):
        return self.cells.shape

    def copy(self) -> "OccupancyGrid":
        g = OccupancyGrid(self.resolution, self.origin_cell)
        g.cells = self.cells.copy()
        return g

    def world_cell(self, x: float, y: float) -> tuple[int, int]:
        return (int(math.floor(y / self.resolution)), int(math.floor(x / self.resolution)))

    def index_of(self, x: float, y: float) -> tuple[int, int]:
        r, c = self.world_cell(x, y)
        return (r - self.origin_cell[0], c - self.origin_cell[1])

    def center_of(self, r: int, c: int) -> tuple[float, float]:
        return ((c + self.origin_cell[1] + 0.5) * self.resolution, (r + self.origin_cell[0] + 0.5) * self.resolution)

    def contains_index(self, r: int, c: int) -> bool:
        return 0 <= r < self.cells.shape[0] and 0 <= c < self.cells.shape[1]

    def ensure_covers(self, xmin: float, ymin: float, xmax: float, ymax: float):
        r_lo, c_lo = self.world_cell(xmin, ymin)
        r_hi, c_hi = self.world_cell(xmax, ymax)
        h, w = self.cells.shape
        if h == 0 or w == 0:
            self.origin_cell = (r_lo, c_lo)
            self.cells = np.full((r_hi - r_lo + 1, c_hi - c_lo + 1), UNKNOWN, np.int8)
            return
        R0, C0 = self.origin_cell
        nr0, nc0 = min(R0, r_lo), min(C0, c_lo)
        nr1, nc1 = max(R0 + h - 1, r_hi), max(C0 + w - 1, c_hi)
        if (nr0, nc0) == (R0, C0) and nr1 == R0 + h - 1 and nc1 == C0 + w - 1:
            return
        new = np.full((nr1 - nr0 + 1, nc1 - nc0 + 1), UNKNOWN, np.int8)
        new[R0 - nr0 : R0 - nr0 + h, C0 - nc0 : C0 - nc0 + w] = self.cells
        self.cells = new
        self.origin_cell = (nr0, nc0)

    def integrate_view(self, pose: Pose, view: View):
        reach = view.max_range + 2 * self.resolution
        self.ensure_covers(pose.x - reach, pose.y - reach, pose.x + reach, pose.y + reach)
        k = view.intrinsics
        a = math.radians(normalize_yaw(pose.yaw + view.yaw_offset))
        _integrate_columns(
            self.cells, self.origin_cell[0], self.origin_cell[1], self.resolution, pose.x, pose.y,
            math.cos(a), math.sin(a), math.sin(a), -math.cos(a), k.cx, k.fx,
            np.ascontiguousarray(view.depth[BAND_TOP]), view.max_range,
        )

    def known_mask(self) -> np.ndarray:
        return self.cells != UNKNOWN

    def to_pgm(self) -> str:
        """Plain-text PGM: 0 occupied, 1 unknown, 2 free; row 0 is the northmost row."""
        lut = {OCCUPIED: "0", UNKNOWN: "1", FREE: "2"}
        h, w = self.cells.shape
        lines = ["P2", f"{w} {h}", "2"]
        for row in self.cells[::-1]:
            lines.append(" ".join(lut[int(v)] for v in row))
        return "\n".join(lines) + "\n"


def integrate_panorama(grid: OccupancyGrid, pose: Pose, panorama: PanoramaObservation) -> OccupancyGrid:
    """Mark each column's ray free up to its return and the hit cell occupied (occupied wins)."""
    for view in panorama.views.values():
        grid.integrate_view(pose, view)
    return grid


def known_fraction(grid) -> float:
    known = grid.cells != UNKNOWN
    if not known.any():
        return 0.0
    idx = np.argwhere(known)
    lo = idx.min(axis=0)
    hi = idx.max(axis=0) + 1
    box = known[tuple(slice(a, b) for a, b in zip(lo, hi))]
    return float(box.sum()) / float(box.size)


# ---- 3-D voxel belief -----------------------------------------------------


@nb.njit(cache=True)
def _integrate_pixels(cells, res, px, py, pz, right, down, fwd, cx, cy, fx, fy, depth, max_range):
    D, H, W = cells.shape
    for v in range(depth.shape[0]):
        b = (v - cy) / fy
        for u in range(depth.shape[1]):
            a = (u - cx) / fx
            dx = fwd[0] + a * right[0] + b * down[0]
            dy = fwd[1] + a * right[1] + b * down[1]
            dz = fwd[2] + a * right[2] + b * down[2]
            s_hit = depth[v, u]
            hit = s_hit < np.inf
            s_end = s_hit if hit else max_range / math.sqrt(1.0 + a * a + b * b)
            i = int(math.floor(px / res))
            j = int(math.floor(py / res))
            k = int(math.floor(pz / res))
            si, ti, dti = _axis(px, dx, res, i)
            sj, tj, dtj = _axis(py, dy, res, j)
            sk, tk, dtk = _axis(pz, dz, res, k)
            s = 0.0
            while True:
                inside = 0 <= i < W and 0 <= j < H and 0 <= k < D
                if hit and s >= s_hit and min(ti, tj, tk) > s_hit:
                    if inside:
                        cells[k, j, i] = 1
                    break
                if inside and cells[k, j, i] != 1:
                    cells[k, j, i] = 0
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
                if not hit and s > s_end:
                    break
                if not inside and (i < -1 or i > W or j < -1 or j > H or k < -1 or k > D):
                    break


class VoxelMap:
    """Tri-state voxel volume over a fixed operating box with origin at the world origin."""

    def __init__(self, resolution: float, shape: tuple[int, int, int]):
        self.resolution = float(resolution)
        self.cells = np.full(shape, UNKNOWN, np.int8)

    def integrate_view(self, pose: Pose, view: View):
        right, down, fwd = camera_axes(pose, view.yaw_offset, view.pitch)
        k = view.intrinsics
        _integrate_pixels(self.cells, self.resolution, pose.x, pose.y, pose.z, right, down, fwd,
                          k.cx, k.cy, k.fx, k.fy, view.depth, view.max_range)

    def integrate_panorama(self, pose: Pose, panorama: PanoramaObservation) -> "VoxelMap":
        for view in panorama.views.values():
            self.integrate_view(pose, view)
        return self
