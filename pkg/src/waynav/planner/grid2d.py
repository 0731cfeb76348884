from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..errors import NoNearbyTraversable, SourceBlocked, Unreachable
from ..geometry import Point3, Pose
from ..mapping import OCCUPIED, OccupancyGrid
from ..world.raycast import segment_clear_2d
from .fmm import descend, inflate, march

GROUND_INFLATION = 0.18
RETARGET_RADIUS = 1.0
COLLINEAR_TOL = 1e-3


@dataclass
class Path:
    waypoints: list[tuple[float, ...]]
    length: float

    @classmethod
    def from_points(cls, pts) -> "Path":
        pts = [tuple(float(v) for v in p) for p in pts]
        return cls(pts, polyline_length(pts))

    @property
    def end(self):
        return self.waypoints[-1]


def polyline_length(pts) -> float:
    return float(sum(math.dist(a, b) for a, b in zip(pts, pts[1:])))


@dataclass
class DistanceField:
    values: np.ndarray  # metres, inf where unreachable or blocked
    passable: np.ndarray
    resolution: float
    origin_cell: tuple[int, int]
    source: tuple[int, int]  # array index of the source cell
    source_point: tuple[float, float]

    def index_of(self, x: float, y: float) -> tuple[int, int]:
        return (int(math.floor(y / self.resolution)) - self.origin_cell[0],
                int(math.floor(x / self.resolution)) - self.origin_cell[1])

    def center_of(self, r: int, c: int) -> tuple[float, float]:
        return ((c + self.origin_cell[1] + 0.5) * self.resolution, (r + self.origin_cell[0] + 0.5) * self.resolution)

    def value_at(self, x: float, y: float) -> float:
        r, c = self.index_of(x, y)
        if not (0 <= r < self.values.shape[0] and 0 <= c < self.values.shape[1]):
            return math.inf
        return float(self.values[r, c])


def planning_mask(grid: OccupancyGrid, inflation: float = GROUND_INFLATION, relieve=None) -> np.ndarray:
    """Passable cells: not within ``inflation`` of an occupied cell; unknown counts as passable.

    ``relieve`` holds world points inside the inflation margin; nearby cells
    at least as far from obstacles as such a point are re-opened, so an agent
    standing close to a wall can still leave (or be routed back to exactly
    such a spot) without the path hugging other walls.
    """
    occupied = grid.cells == OCCUPIED
    blocked = inflate(occupied, inflation / grid.resolution)
    if relieve is not None and len(relieve) and not isinstance(relieve[0], (tuple, list)):
        relieve = [relieve]
    k = int(math.ceil(inflation / grid.resolution)) + 1
    for point in relieve or ():
        r, c = grid.index_of(*point)
        if not grid.contains_index(r, c) or not blocked[r, c]:
            continue
        # clearance is exact inside the window because it is padded by k cells
        R0, R1 = max(r - 2 * k, 0), min(r + 2 * k + 1, blocked.shape[0])
        C0, C1 = max(c - 2 * k, 0), min(c + 2 * k + 1, blocked.shape[1])
        clear = ndimage.distance_transform_edt(~occupied[R0:R1, C0:C1])
        r0, r1 = max(r - k, 0) - R0, min(r + k + 1, blocked.shape[0]) - R0
        c0, c1 = max(c - k, 0) - C0, min(c + k + 1, blocked.shape[1]) - C0
        local = clear[r0:r1, c0:c1]
        # open only cells at least as clear as the point itself: moving off a wall, never toward one
        opened = local >= clear[r - R0, c - C0] - 1e-9
        blocked[r0 + R0:r1 + R0, c0 + C0:c1 + C0] &= ~opened
    return ~blocked


def fmm_field(grid: OccupancyGrid, source, inflation: float = GROUND_INFLATION, passable=None,
              stop_at=None) -> DistanceField:
    sx, sy = source[0], source[1]
    if passable is None:
        grid.ensure_covers(sx, sy, sx, sy)
        passable = planning_mask(grid, inflation)
    r, c = grid.index_of(sx, sy)
    if not (grid.contains_index(r, c) and passable[r, c]):
        raise SourceBlocked(f"source {(sx, sy)} is inside an obstacle")
    init = np.full(passable.shape, np.inf)
    init[r, c] = 0.0
    stop = grid.index_of(*stop_at[:2]) if stop_at is not None else None
    values = march(passable, init, grid.resolution, stop=stop)
    return DistanceField(values, passable, grid.resolution, grid.origin_cell, (r, c), (float(sx), float(sy)))


def decimate(points, tol: float = COLLINEAR_TOL):
    if len(points) <= 2:
        return list(points)
    out = [points[0]]
    for i in range(1, len(points) - 1):
        a, b, c = out[-1], points[i], points[i + 1]
        h1 = math.atan2(b[1] - a[1], b[0] - a[0])
        h2 = math.atan2(c[1] - b[1], c[0] - b[0])
        d = abs((h2 - h1 + math.pi) % (2 * math.pi) - math.pi)
        if d >= tol:
            out.append(b)
    out.append(points[-1])
    return out


def extract_path(field: DistanceField, start) -> Path:
    sx, sy = start[0], start[1]
    if not math.isfinite(field.value_at(sx, sy)):
        raise Unreachable(f"start {(sx, sy)} has no finite arrival time")
    cells = descend(field.values, field.passable, field.index_of(sx, sy))
    pts = [(float(sx), float(sy))]
    for r, c in cells[1:-1]:
        pts.append(field.center_of(int(r), int(c)))
    if len(cells) > 1 or (float(sx), float(sy)) != field.source_point:
        pts.append(field.source_point)
    pts = [p for i, p in enumerate(pts) if i == 0 or p != pts[i - 1]]
    return Path.from_points(decimate(pts))


def nearest_passable(grid: OccupancyGrid, passable: np.ndarray, x: float, y: float, radius: float):
    r, c = grid.index_of(x, y)
    k = int(math.ceil(radius / grid.resolution)) + 1
    best = None
    for rr in range(r - k, r + k + 1):
        for cc in range(c - k, c + k + 1):
            if not grid.contains_index(rr, cc) or not passable[rr, cc]:
                continue
            px, py = grid.center_of(rr, cc)
            d = math.hypot(px - x, py - y)
            if d <= radius and (best is None or (d, rr, cc) < best):
                best = (d, rr, cc)
    if best is None:
        return None
    return grid.center_of(best[1], best[2])


def plan_to(grid: OccupancyGrid, start: Pose, target: Point3, inflation: float = GROUND_INFLATION,
            exact_target: bool = False) -> Path:
    """FMM field from the target, descended from the start pose.

    A target on an obstacle or its inflation margin is moved to the nearest
    passable cell within 1 m, unless ``exact_target`` asks for the target's
    inflation margin to be relieved like the start's.
    """
    pad = 2 * grid.resolution
    grid.ensure_covers(min(start.x, target.x) - pad, min(start.y, target.y) - pad,
                       max(start.x, target.x) + pad, max(start.y, target.y) + pad)
    relieve = [start.xy, target.xy] if exact_target else [start.xy]
    passable = planning_mask(grid, inflation, relieve=relieve)
    tx, ty = target.x, target.y
    r, c = grid.index_of(tx, ty)
    if not passable[r, c]:
        moved = nearest_passable(grid, passable, tx, ty, RETARGET_RADIUS)
        if moved is None:
            raise NoNearbyTraversable(f"no traversable cell within {RETARGET_RADIUS} m of {(tx, ty)}")
        tx, ty = moved
    if grid.index_of(tx, ty) == grid.index_of(start.x, start.y):
        return Path.from_points([start.xy])
    field = fmm_field(grid, (tx, ty), inflation, passable=passable, stop_at=start.xy)
    return extract_path(field, start.xy)


def path_is_clear(grid: OccupancyGrid, path: Path, passable: np.ndarray) -> bool:
    ox, oy = grid.origin
    blocked = np.ascontiguousarray(~passable)
    for a, b in zip(path.waypoints, path.waypoints[1:]):
        if not segment_clear_2d(blocked, grid.resolution, ox, oy, a[0], a[1], b[0], b[1]):
            return False
    return True
