"""Ground-truth simulation: rendering, action execution and goal checks."""

from __future__ import annotations

import math

import numpy as np

from ..errors import EpisodeTerminated, InvalidPose
from ..geometry import DOWN_PITCH, Pose, camera_axes, normalize_yaw
from . import raycast
from .model import (
    AERIAL_MAX_RANGE,
    BAND_BOTTOM,
    BAND_TOP,
    FORWARD_STEP,
    GROUND_MAX_RANGE,
    GROUND_VIEWS,
    MOVE_FORWARD,
    STOP,
    TURN_LEFT,
    TURN_RIGHT,
    TURN_STEP,
    AgentState,
    GoalStatus,
    PanoramaObservation,
    Site,
    View,
    WorldModel,
    default_intrinsics,
)


def _check_pose(world: WorldModel, pose: Pose):
    if not world.is_free(pose):
        raise InvalidPose(f"{pose} is not in free space of {world.name}")


def render_view(world: WorldModel, pose: Pose, yaw_offset: float = 0.0, pitch: float = 0.0) -> View:
    _check_pose(world, pose)
    k = default_intrinsics()
    name = {v: n for n, v in GROUND_VIEWS.items()}.get(yaw_offset % 360.0, f"yaw{yaw_offset:g}")
    if world.is_aerial:
        right, down, fwd = camera_axes(pose, yaw_offset, pitch)
        vox = world.voxels
        depth, sem = raycast.render_pixels_3d(
            vox.occupied, vox.labels, world.resolution, np.array(pose.xyz),
            right, down, fwd, k.cx, k.cy, k.fx, k.fy, k.width, k.height, AERIAL_MAX_RANGE,
        )
        if pitch == DOWN_PITCH:
            name = "down"
        return View(name, depth, sem, k, yaw_offset, pitch, AERIAL_MAX_RANGE)
    if pitch != 0.0:
        raise ValueError("ground views are level")
    grid = world.floors[pose.floor_id]
    a = math.radians(normalize_yaw(pose.yaw + yaw_offset))
    col_depth, col_lab = raycast.render_columns(
        grid.occupied, grid.labels, world.resolution, pose.x, pose.y,
        math.cos(a), math.sin(a), math.sin(a), -math.cos(a),
        k.cx, k.fx, k.width, GROUND_MAX_RANGE,
    )
    depth = np.full((k.height, k.width), np.inf)
    sem = np.zeros((k.height, k.width), np.int32)
    depth[BAND_TOP:BAND_BOTTOM, :] = col_depth
    sem[BAND_TOP:BAND_BOTTOM, :] = col_lab
    return View(name, depth, sem, k, yaw_offset, 0.0, GROUND_MAX_RANGE)


def render_panorama(world: WorldModel, pose: Pose) -> PanoramaObservation:
    views = {name: render_view(world, pose, off) for name, off in GROUND_VIEWS.items()}
    if world.is_aerial:
        views["down"] = render_view(world, pose, 0.0, DOWN_PITCH)
    return PanoramaObservation(views, default_intrinsics(), pose)


def step(world: WorldModel, agent: AgentState, action: str) -> AgentState:
    if agent.stopped:
        raise EpisodeTerminated("agent already stopped")
    p = agent.pose
    if action == MOVE_FORWARD:
        hx, hy = p.heading()
        nx, ny = p.x + FORWARD_STEP * hx, p.y + FORWARD_STEP * hy
        occ = world.floors[p.floor_id].occupied
        if not raycast.segment_clear_2d(occ, world.resolution, 0.0, 0.0, p.x, p.y, nx, ny):
            return AgentState(p, collided_last_step=True)
        return AgentState(p.with_(x=nx, y=ny))
    if action == TURN_LEFT:
        return AgentState(p.with_(yaw=p.yaw + TURN_STEP))
    if action == TURN_RIGHT:
        return AgentState(p.with_(yaw=p.yaw - TURN_STEP))
    if action == STOP:
        return AgentState(p, stopped=True)
    raise ValueError(f"unknown action {action!r}")


def fly_to(world: WorldModel, agent: AgentState, x: float, y: float, z: float) -> AgentState:
    """Aerial waypoint command: straight segment, refused if it intersects an occupied voxel."""
    if agent.stopped:
        raise EpisodeTerminated("agent already stopped")
    p = agent.pose
    ok = raycast.segment_clear_3d(world.voxels.occupied, world.resolution, p.x, p.y, p.z, x, y, z)
    if not ok:
        return AgentState(p, collided_last_step=True)
    yaw = p.yaw
    if math.hypot(x - p.x, y - p.y) > 1e-9:
        yaw = math.degrees(math.atan2(y - p.y, x - p.x))
    return AgentState(p.with_(x=x, y=y, z=z, yaw=yaw))


# ---- geodesic ground truth ------------------------------------------------


def truth_fields(world: WorldModel, targets: tuple[Site, ...]) -> dict[int, np.ndarray]:
    """Per-floor geodesic distance fields (metres) to the nearest target, crossing stair links.

    Stair traversal is free; floors are relaxed against each other until stable.
    """
    key = ("truth", targets)
    if key in world._cache:
        return world._cache[key]
    from ..planner.fmm import march  # deferred: the planner package imports mapping, which imports world

    n = len(world.floors)
    res = world.resolution
    fields = {f: np.full(world.floors[f].occupied.shape, np.inf) for f in range(n)}
    seeds = {f: np.full(world.floors[f].occupied.shape, np.inf) for f in range(n)}
    for t in targets:
        r, c = world.cell_of(t.x, t.y)
        seeds[t.floor_id][r, c] = 0.0
    for _ in range(n + 1):
        changed = False
        for f in range(n):
            init = seeds[f].copy()
            for link in world.stair_links:
                for fa, ca, fb, cb in ((link.floor_a, link.cell_a, link.floor_b, link.cell_b),
                                       (link.floor_b, link.cell_b, link.floor_a, link.cell_a)):
                    if fa == f:
                        init[ca] = min(init[ca], fields[fb][cb])
            new = march(~world.floors[f].occupied, init, res)
            if not np.array_equal(new, fields[f]):
                changed = True
                fields[f] = new
        if not changed:
            break
    world._cache[key] = fields
    return fields


def geodesic_distance(world: WorldModel, pose: Pose, targets: tuple[Site, ...]) -> float:
    if world.is_aerial:
        return _aerial_distance(world, pose, targets)
    fields = truth_fields(world, targets)
    r, c = world.cell_of(pose.x, pose.y)
    f = fields[pose.floor_id]
    if not (0 <= r < f.shape[0] and 0 <= c < f.shape[1]):
        return math.inf
    return float(f[r, c])


def _aerial_distance(world: WorldModel, pose: Pose, targets: tuple[Site, ...]) -> float:
    from ..planner.vis3d import plan_3d_on_array
    from ..errors import Unreachable

    best = math.inf
    occ = world.voxels.occupied
    for t in targets:
        if raycast.segment_clear_3d(occ, world.resolution, pose.x, pose.y, pose.z, t.x, t.y, t.z):
            d = math.dist(pose.xyz, (t.x, t.y, t.z))
        else:
            try:
                d = plan_3d_on_array(occ, world.resolution, pose.xyz, (t.x, t.y, t.z), inflate_cells=0).length
            except Unreachable:
                d = math.inf
        best = min(best, d)
    return best


def check_goal(world: WorldModel, pose: Pose) -> GoalStatus:
    d = geodesic_distance(world, pose, tuple(world.task.goal_positions))
    return GoalStatus(d, d <= world.task.success_radius)
