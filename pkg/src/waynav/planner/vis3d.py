"""Visibility-graph planning in voxel free space, plus the aerial fallback waypoint."""

from __future__ import annotations

import heapq
import math

import numpy as np

from ..errors import BlockedAhead, Unreachable
from ..geometry import Point3, Pose
from ..mapping import OCCUPIED, VoxelMap
from ..world.raycast import segment_clear_3d
from .grid2d import Path

AERIAL_INFLATION = 0.5
MAX_WAYPOINT_STEP = 5.0
ALTITUDE_BAND = (2.0, 40.0)


def _dilate3(occ: np.ndarray, radius_cells: float) -> np.ndarray:
    if radius_cells < 1.0:
        return occ.copy()
    from scipy import ndimage

    k = int(math.ceil(radius_cells))
    zz, yy, xx = np.mgrid[-k : k + 1, -k : k + 1, -k : k + 1]
    ball = zz * zz + yy * yy + xx * xx <= radius_cells * radius_cells + 1e-9
    return ndimage.binary_dilation(occ, structure=ball)


def corner_voxels(blocked: np.ndarray) -> np.ndarray:
    """Free voxels diagonally adjacent to a convex obstacle edge or corner.

    A free voxel qualifies when, in some axis plane, its diagonal neighbour is
    blocked while both face neighbours that flank the diagonal are free.
    """
    D, H, W = blocked.shape
    pad = np.pad(blocked, 1, constant_values=False)
    free = ~pad
    mask = np.zeros_like(pad)
    axes = [(1, 0, 0), (0, 1, 0), (0, 0, 1)]
    core = (slice(1, D + 1), slice(1, H + 1), slice(1, W + 1))
    for i in range(3):
        for j in range(i + 1, 3):
            for si in (-1, 1):
                for sj in (-1, 1):
                    da = tuple(si * v for v in axes[i])
                    db = tuple(sj * v for v in axes[j])
                    dd = tuple(a + b for a, b in zip(da, db))
                    diag = np.roll(pad, tuple(-v for v in dd), axis=(0, 1, 2))
                    fa = np.roll(free, tuple(-v for v in da), axis=(0, 1, 2))
                    fb = np.roll(free, tuple(-v for v in db), axis=(0, 1, 2))
                    mask |= free & diag & fa & fb
    return mask[core]


def _center(idx, res):
    k, j, i = idx
    return ((i + 0.5) * res, (j + 0.5) * res, (k + 0.5) * res)


def plan_3d_on_array(blocked_src: np.ndarray, res: float, start, goal, inflate_cells: float = 0.0) -> Path:
    blocked = _dilate3(np.asarray(blocked_src, bool), inflate_cells)
    blocked = np.ascontiguousarray(blocked)
    D, H, W = blocked.shape

    def voxel(p):
        return (int(math.floor(p[2] / res)), int(math.floor(p[1] / res)), int(math.floor(p[0] / res)))

    for name, p in (("start", start), ("goal", goal)):
        k, j, i = voxel(p)
        if not (0 <= k < D and 0 <= j < H and 0 <= i < W) or blocked[k, j, i]:
            raise Unreachable(f"{name} {tuple(p)} is blocked or outside the volume")
    start = tuple(float(v) for v in start)
    goal = tuple(float(v) for v in goal)

    def clear(a, b):
        return segment_clear_3d(blocked, res, a[0], a[1], a[2], b[0], b[1], b[2])

    if clear(start, goal):
        return Path.from_points([start, goal])
    corners = [tuple(int(v) for v in idx) for idx in np.argwhere(corner_voxels(blocked))]
    corners.sort()
    # node ids: 0 = start, 1 = goal, then corners in lexicographic voxel order
    points = [start, goal] + [_center(c, res) for c in corners]
    n = len(points)
    dist = [math.inf] * n
    prev = [-1] * n
    done = [False] * n
    dist[0] = 0.0
    heap = [(0.0, 0)]
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        if u == 1:
            break
        pu = points[u]
        for v in range(1, n):
            if done[v]:
                continue
            pv = points[v]
            nd = d + math.dist(pu, pv)
            if nd < dist[v] - 1e-12 and clear(pu, pv):
                dist[v] = nd
                prev[v] = u
                heapq.heappush(heap, (nd, v))
    if not math.isfinite(dist[1]):
        raise Unreachable("goal not connected to start in the visibility graph")
    chain = [1]
    while chain[-1] != 0:
        chain.append(prev[chain[-1]])
    return Path.from_points([points[i] for i in reversed(chain)])


def plan_3d(voxels: VoxelMap, start: Point3, goal: Point3, inflation: float = AERIAL_INFLATION) -> Path:
    """Shortest collision-free polyline over known-occupied voxels (unknown is free)."""
    occupied = voxels.cells == OCCUPIED
    return plan_3d_on_array(occupied, voxels.resolution, (start.x, start.y, start.z),
                            (goal.x, goal.y, goal.z), inflate_cells=inflation / voxels.resolution)


def direction_constrained_waypoint(start_pose: Pose, current_pose: Pose, goal_direction, front_depth: np.ndarray) -> Point3:
    """Safe step along the goal bearing when visual grounding fails.

    Distance is min(5 m, half the nearest finite front depth); the result is
    clamped to the aerial altitude band.
    """
    g = np.asarray(goal_direction, float)
    n = float(np.linalg.norm(g))
    if n == 0.0:
        raise ValueError("goal_direction must be non-zero")
    g = g / n
    finite = front_depth[np.isfinite(front_depth)]
    step = MAX_WAYPOINT_STEP
    if finite.size:
        nearest = float(finite.min())
        if nearest < 1.0:
            raise BlockedAhead(f"obstacle {nearest:.2f} m ahead")
        step = min(step, 0.5 * nearest)
    x, y, z = np.array(current_pose.xyz) + step * g
    z = min(max(z, ALTITUDE_BAND[0]), ALTITUDE_BAND[1])
    return Point3(float(x), float(y), float(z))
