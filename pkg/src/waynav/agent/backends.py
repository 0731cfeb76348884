"""Decision backends: the interface, the ground-truth oracle used for testing, and a fault injector."""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass, field
from typing import Optional, Protocol

import numpy as np

from ..errors import BehindCamera, GroundingFailed
from ..geometry import Point3, Pose, backproject, cam_to_world, project, world_to_cam, wrap_angle
from ..planner.fmm import descend
from ..tdm import COMPLETED, TodoList, Update, find_rendered
from ..world.model import BAND_BOTTOM, BAND_TOP, DIRECTIONS, GROUND_VIEWS, AgentState, Site, View, WorldModel
from ..world.raycast import segment_clear_2d
from ..world.sim import geodesic_distance, truth_fields
from .prompts import PromptPayload
from .schemas import BBox, DoubleCheck, GoStair, LangDecision, Point, Turn, VisDecision, Verification, parse_lang_response

DISTAL_MIN_DEPTH = 2.0
STAIR_TRIGGER = 2.0
AIM_HORIZON = 3.0
STAIR_LABEL = "staircase"


class DecisionBackend(Protocol):
    def decide_lang(self, payload: PromptPayload) -> str: ...

    def decide_vis(self, payload: PromptPayload) -> str: ...

    def for_episode(self, world: WorldModel, probe: "EpisodeProbe") -> "DecisionBackend": ...


@dataclass
class EpisodeProbe:
    """Live agent state the runner exposes to episode-bound backends. Only oracles read it."""

    pose: Pose
    panorama: object = None
    todo: Optional[TodoList] = None
    buffer: object = None


# ---- ground-truth helpers --------------------------------------------------------------


def _targets(world: WorldModel) -> list[tuple[Site, ...]]:
    task = world.task
    if task.ordered_subgoal_positions:
        return [(s,) for s in task.ordered_subgoal_positions]
    return [tuple(task.goal_positions)]


def _target_label(world: WorldModel, i: int) -> str:
    t = _targets(world)[i]
    return t[0].label or world.task.target_label


def oracle_subgoals(world: WorldModel) -> list[str]:
    task = world.task
    if task.ordered_subgoal_positions:
        subs = task.ordered_subgoal_positions
        return [f"reach the {s.label}" for s in subs[:-1]] + [f"stop near the {subs[-1].label}"]
    if task.family == "EQA":
        return [f"find the {task.target_label} and answer the question"]
    if task.family == "AerialVLN":
        return [f"fly to the {task.target_label}"]
    return [f"find the {task.target_label}"]


@dataclass
class Route:
    points: list[tuple[float, float]]  # cell centres from the agent toward the target
    via_stair: Optional[tuple[int, tuple[int, int], int]]  # (this floor, endpoint cell, other floor)


def truth_route(world: WorldModel, pose: Pose, sites: tuple[Site, ...]) -> Route:
    fields = truth_fields(world, sites)
    f = pose.floor_id
    T = fields[f]
    cells = descend(T, ~world.floors[f].occupied, world.cell_of(pose.x, pose.y))
    pts = [world.cell_center(int(r), int(c)) for r, c in cells]
    end = (int(cells[-1][0]), int(cells[-1][1]))
    via = None
    if T[end] > 0.0:
        for link in world.stair_links:
            for fa, ca, fb in ((link.floor_a, link.cell_a, link.floor_b), (link.floor_b, link.cell_b, link.floor_a)):
                if fa == f and tuple(ca) == end:
                    via = (f, end, fb)
    return Route(pts, via)


def _aim_point(world: WorldModel, pose: Pose, route: Route, horizon: float = AIM_HORIZON):
    occ = world.floors[pose.floor_id].occupied
    best = route.points[-1]
    walked = 0.0
    prev = pose.xy
    for p in route.points[1:]:
        walked += math.dist(prev, p)
        prev = p
        if walked > horizon:
            break
        if segment_clear_2d(occ, world.resolution, 0.0, 0.0, pose.x, pose.y, p[0], p[1]):
            best = p
    return best


def sector_of(rel_deg: float) -> str:
    """Panorama direction whose 90-degree sector contains a bearing relative to the heading."""
    a = wrap_angle(rel_deg)
    if -45.0 <= a <= 45.0:
        return "front"
    if 45.0 < a <= 135.0:
        return "left"
    if -135.0 <= a < -45.0:
        return "right"
    return "back"


def _avoid(direction: str, rel_deg: float, failed: Optional[str]) -> str:
    if failed is None or direction != failed:
        return direction
    others = [d for d in DIRECTIONS if d != failed]
    return min(others, key=lambda d: (abs(wrap_angle(rel_deg - GROUND_VIEWS[d])), DIRECTIONS.index(d)))


def _bearing_rel(pose: Pose, x: float, y: float) -> float:
    return wrap_angle(math.degrees(math.atan2(y - pose.y, x - pose.x)) - pose.yaw)


def _completed_from(todo: Optional[TodoList], memory: Optional[set], n: int) -> set[int]:
    if todo is not None:
        return {i - 1 for i, it in enumerate(todo.items, 1) if it.status == COMPLETED and i <= n}
    if memory is not None:
        return set(memory)
    return set()


@dataclass
class OraclePlan:
    decision: LangDecision
    target_index: int
    target_label: str
    route: Optional[Route]


def _oracle_plan(world: WorldModel, state: AgentState, todo: Optional[TodoList], memory: Optional[set],
                 failed_direction: Optional[str] = None) -> OraclePlan:
    task = world.task
    pose = state.pose
    targets = _targets(world)
    n = len(targets)
    radius = task.success_radius
    done = _completed_from(todo, memory, n)
    dist = [geodesic_distance(world, pose, t) for t in targets]
    ops = []
    for i in range(n):
        if i in done:
            continue
        if all(j in done for j in range(i)) and dist[i] <= radius:
            done.add(i)
            if memory is not None:
                memory.add(i)
            if todo is not None:
                ops.append(Update(i + 1, COMPLETED, f"the {_target_label(world, i)} is {dist[i]:.1f} m away"))
        else:
            break
    pending = [i for i in range(n) if i not in done]
    if not pending:
        if dist[-1] <= radius:
            answer = task.eqa_answer if task.family == "EQA" else None
            dec = LangDecision(DoubleCheck(answer), "all sub-goals satisfied", "mark reached sub-goals",
                               "goal within reach; request stop", tuple(ops))
            return OraclePlan(dec, n - 1, _target_label(world, n - 1), None)
        pending = [n - 1]
    ti = pending[0]
    label = _target_label(world, ti)
    if world.is_aerial:
        g = targets[ti][0]
        rel = _bearing_rel(pose, g.x, g.y) if math.hypot(g.x - pose.x, g.y - pose.y) > 1e-6 else 0.0
        direction = _avoid(sector_of(rel), rel, failed_direction)
        dec = LangDecision(Turn(direction), f"heading for sub-goal {ti + 1}", "", f"the {label} lies {direction}",
                           tuple(ops))
        return OraclePlan(dec, ti, label, None)
    route = truth_route(world, pose, targets[ti])
    if route.via_stair is not None:
        f, cell, other = route.via_stair
        ex, ey = world.cell_center(*cell)
        occ = world.floors[pose.floor_id].occupied
        if math.hypot(ex - pose.x, ey - pose.y) <= STAIR_TRIGGER and \
                segment_clear_2d(occ, world.resolution, 0.0, 0.0, pose.x, pose.y, ex, ey):
            dec = LangDecision(GoStair("up" if other > f else "down"), "at the staircase", "",
                               "change floor toward the target", tuple(ops))
            return OraclePlan(dec, ti, STAIR_LABEL, route)
        label = STAIR_LABEL
    ax, ay = _aim_point(world, pose, route)
    rel = _bearing_rel(pose, ax, ay) if math.hypot(ax - pose.x, ay - pose.y) > 1e-6 else 0.0
    direction = _avoid(sector_of(rel), rel, failed_direction)
    dec = LangDecision(Turn(direction), f"heading for sub-goal {ti + 1}", "",
                       f"the way to the {label} lies {direction}", tuple(ops))
    return OraclePlan(dec, ti, label, route)


def oracle_lang_decide(world: WorldModel, state: AgentState, todo: Optional[TodoList], buffer=None, *,
                       memory: Optional[set] = None, failed_direction: Optional[str] = None) -> LangDecision:
    """Ground-truth language decision: next unfinished sub-goal, sector of the first path leg.

    ``todo`` (the checklist as shown to the backend) is the record of finished
    sub-goals when given; otherwise ``memory`` is, and without either every
    sub-goal counts as unfinished. The buffer is never used: the oracle never
    asks to backtrack.
    """
    return _oracle_plan(world, state, todo, memory, failed_direction).decision


# ---- vision -------------------------------------------------------------------------------


def _selection(u0: int, v0: int, u1: int, v1: int, w: int, h: int):
    u0, u1 = max(0, min(u0, w - 1)), max(0, min(u1, w - 1))
    v0, v1 = max(0, min(v0, h - 1)), max(0, min(v1, h - 1))
    if u0 == u1 or v0 == v1:
        return Point((u0 + u1) // 2, (v0 + v1) // 2)
    return BBox(u0, v0, u1, v1)


def label_box(view: View, label_id: int):
    mask = view.semantic == label_id
    if label_id == 0 or not mask.any():
        return None
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    k = view.intrinsics
    return _selection(int(cols[0]), int(rows[0]), int(cols[-1]), int(rows[-1]), k.width, k.height)


def distal_box(view: View, min_depth: float = DISTAL_MIN_DEPTH):
    k = view.intrinsics
    depth = view.depth
    row = int(round(k.cy))
    line = np.where(np.isfinite(depth[row]), depth[row], -1.0)
    if line.max() >= min_depth:
        u = int(np.argmax(line))
        v = row
    else:
        d = np.where(np.isfinite(depth), depth, -1.0)
        if d.max() < min_depth:
            return None
        v, u = (int(x) for x in np.unravel_index(int(np.argmax(d)), d.shape))
    return _selection(u - 3, v - 3, u + 3, v + 3, k.width, k.height)


def oracle_vis_decide(view: View, target_label: str, labels: dict[int, str]) -> VisDecision:
    """Box on the target label if visible, else on the most distant free space at least 2 m away."""
    lid = next((k for k, v in labels.items() if v == target_label), 0)
    box = label_box(view, lid)
    if box is not None:
        return VisDecision(box, target_label)
    box = distal_box(view)
    if box is None:
        raise GroundingFailed(f"no {target_label!r} and nothing beyond {DISTAL_MIN_DEPTH} m in view {view.name}")
    return VisDecision(box, "distant free space")


def _route_box(world: WorldModel, pose: Pose, view: View, route: Route):
    """Column of the furthest route point visible in this view, on a column with a depth return."""
    k = view.intrinsics
    occ = world.floors[pose.floor_id].occupied
    heading = pose.yaw + view.yaw_offset
    half_fov = math.degrees(math.atan2(k.cx, k.fx)) - 1.0
    best_u = None
    for p in route.points[4::4]:
        d = math.hypot(p[0] - pose.x, p[1] - pose.y)
        if d < 0.25 or d > view.max_range - 0.5:
            continue
        rel = wrap_angle(math.degrees(math.atan2(p[1] - pose.y, p[0] - pose.x)) - heading)
        if abs(rel) > half_fov:
            continue
        if segment_clear_2d(occ, world.resolution, 0.0, 0.0, pose.x, pose.y, p[0], p[1]):
            best_u = int(round(k.cx - k.fx * math.tan(math.radians(rel))))
    if best_u is None:
        return None
    row = view.depth[int(round(k.cy))]
    for off in sorted(range(-8, 9), key=lambda o: (abs(o), o)):
        u = best_u + off
        if 0 <= u < k.width and math.isfinite(row[u]):
            return _selection(u - 2, BAND_TOP + 8, u + 2, BAND_BOTTOM - 8, k.width, k.height)
    return None


def _aerial_goal_point(world: WorldModel, pose: Pose, view: View):
    """Pixel of the goal when it is in frame, unoccluded, and backed by a depth return to ground on."""
    g = world.task.goal_positions[0]
    try:
        pc = world_to_cam(Point3(g.x, g.y, g.z), pose, view.yaw_offset, view.pitch)
        u, v = project(pc, view.intrinsics)
    except BehindCamera:
        return None
    k = view.intrinsics
    if not (0 <= u < k.width and 0 <= v < k.height):
        return None
    d = float(view.depth[int(v), int(u)])
    if not math.isfinite(d) or d < pc.z - 1.0:
        return None
    return Point(int(u), int(v))


_NEIGHBOURS_26 = [(a, b, c) for a in (-1, 0, 1) for b in (-1, 0, 1) for c in (-1, 0, 1) if (a, b, c) > (0, 0, 0)]


def aerial_goal_field(world: WorldModel) -> np.ndarray:
    """26-connected shortest distance (metres) from every free voxel to the nearest goal voxel."""
    key = ("aerial_goal_field",)
    if key in world._cache:
        return world._cache[key]
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import dijkstra

    free = ~world.voxels.occupied
    shape = free.shape
    ids = np.arange(free.size).reshape(shape)
    rows, cols, w = [], [], []
    for dz, dy, dx in _NEIGHBOURS_26:
        a = tuple(slice(max(0, -d), n - max(0, d)) for d, n in zip((dz, dy, dx), shape))
        b = tuple(slice(max(0, d), n - max(0, -d)) for d, n in zip((dz, dy, dx), shape))
        ok = free[a] & free[b]
        rows.append(ids[a][ok])
        cols.append(ids[b][ok])
        w.append(np.full(int(ok.sum()), world.resolution * math.sqrt(dz * dz + dy * dy + dx * dx)))
    graph = coo_matrix((np.concatenate(w), (np.concatenate(rows), np.concatenate(cols))), shape=(free.size,) * 2)
    res = world.resolution
    goals = [int(ids[int(g.z // res), int(g.y // res), int(g.x // res)]) for g in world.task.goal_positions]
    dist = dijkstra(graph.tocsr(), directed=False, indices=goals, min_only=True)
    field = dist.reshape(shape)
    world._cache[key] = field
    return field


def _aerial_route_point(world: WorldModel, pose: Pose, view: View, standoff: float = 2.0):
    """Pixel whose depth return, pulled back by ``standoff``, lies closest to the goal by free-space distance."""
    field = aerial_goal_field(world)
    res = world.resolution
    k = view.intrinsics
    D, H, W = field.shape

    def cost(x, y, z):
        i, j, l = int(z // res), int(y // res), int(x // res)
        if 0 <= i < D and 0 <= j < H and 0 <= l < W:
            return float(field[i, j, l])
        return math.inf

    here = cost(pose.x, pose.y, pose.z)
    best = None
    for v in range(2, k.height, 4):
        for u in range(2, k.width, 4):
            d = float(view.depth[v, u])
            if not math.isfinite(d) or d <= standoff:
                continue
            q = cam_to_world(backproject(u, v, d - standoff, k), pose, view.yaw_offset, view.pitch)
            c = cost(q.x, q.y, q.z)
            if best is None or c < best[0]:
                best = (c, u, v)
    if best is None or best[0] >= here - 1.0:
        return None
    return Point(best[1], best[2])


# ---- backends -------------------------------------------------------------------------------


class OracleBackend:
    """Test-only backend that answers from the true world.

    ``forgetful`` drops the oracle's private record of finished sub-goals, so
    progress survives between decisions only through a checklist in the prompt.
    ``guided_vision`` lets grounding follow the true route when the target is
    not in view.
    """

    def __init__(self, forgetful: bool = False, guided_vision: bool = True):
        self.forgetful = forgetful
        self.guided_vision = guided_vision

    def for_episode(self, world: WorldModel, probe: EpisodeProbe) -> "OracleSession":
        return OracleSession(world, probe, self.forgetful, self.guided_vision)

    def decide_lang(self, payload):
        raise RuntimeError("bind the oracle to an episode with for_episode() first")

    decide_vis = decide_lang


class OracleSession:
    def __init__(self, world: WorldModel, probe: EpisodeProbe, forgetful: bool, guided_vision: bool):
        self.world = world
        self.probe = probe
        self.forgetful = forgetful
        self.guided_vision = guided_vision
        self.memory: set[int] = set()
        self.last: Optional[OraclePlan] = None

    def for_episode(self, world, probe):
        return OracleSession(world, probe, self.forgetful, self.guided_vision)

    def decide_lang(self, payload: PromptPayload) -> str:
        kind = payload.kind
        state = AgentState(self.probe.pose)
        if kind == "init":
            return json.dumps({"subgoals": oracle_subgoals(self.world)})
        todo = find_rendered(payload.text)
        memory = None if self.forgetful else self.memory
        if kind == "verify":
            plan = _oracle_plan(self.world, state, todo, None if self.forgetful else set(self.memory))
            ok = isinstance(plan.decision.action, DoubleCheck)
            return Verification(ok, "goal confirmed" if ok else "goal not reached yet").to_json()
        failed = payload.metadata.get("failed_direction") if kind == "recover" else None
        self.last = _oracle_plan(self.world, state, todo, memory, failed)
        return self.last.decision.to_json()

    def decide_vis(self, payload: PromptPayload) -> str:
        direction = payload.metadata["direction"]
        pose = self.probe.pose
        view = self.probe.panorama.views[direction]
        world = self.world
        label = self.last.target_label if self.last else world.task.target_label
        if world.is_aerial:
            sel = _aerial_goal_point(world, pose, view)
            if sel is not None:
                return VisDecision(sel, f"toward the {label}").to_json()
            if self.guided_vision:
                sel = _aerial_route_point(world, pose, view)
                if sel is not None:
                    return VisDecision(sel, "open airspace toward the goal").to_json()
        box = label_box(view, world.label_id(label))
        if box is not None:
            return VisDecision(box, label).to_json()
        if self.guided_vision and not world.is_aerial and self.last and self.last.route is not None:
            box = _route_box(world, pose, view, self.last.route)
            if box is not None:
                return VisDecision(box, "the way onward").to_json()
        try:
            return oracle_vis_decide(view, label, world.labels).to_json()
        except GroundingFailed:
            return VisDecision(None, "nothing worth approaching").to_json()


def _location_rng(seed: int, scope: str, metadata: dict) -> random.Random:
    p = metadata.get("pose", {})
    key = (seed, scope, round(p.get("x", 0.0) / 0.5), round(p.get("y", 0.0) / 0.5), p.get("floor_id", 0))
    digest = hashlib.sha256(repr(key).encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


class FaultyBackend:
    """Replaces ordinary Turn decisions with a different direction at a seeded rate.

    The draw is keyed by the world and the agent's position (0.5 m cells), so
    the same place always produces the same mistake. Recovery, verification, grounding and
    sub-goal initialisation calls pass through untouched.
    """

    def __init__(self, inner, error_rate: float, seed: int, scope: str = ""):
        if not 0.0 <= error_rate <= 1.0:
            raise ValueError("error_rate must be in [0, 1]")
        self.inner = inner
        self.error_rate = error_rate
        self.seed = seed
        self.scope = scope

    def for_episode(self, world, probe) -> "FaultyBackend":
        return FaultyBackend(self.inner.for_episode(world, probe), self.error_rate, self.seed, world.name)

    def decide_lang(self, payload: PromptPayload) -> str:
        raw = self.inner.decide_lang(payload)
        if payload.kind != "decide" or self.error_rate == 0.0:
            return raw
        dec = parse_lang_response(raw)
        if not isinstance(dec.action, Turn):
            return raw
        rng = _location_rng(self.seed, self.scope, payload.metadata)
        if rng.random() >= self.error_rate:
            return raw
        wrong = rng.choice([d for d in DIRECTIONS if d != dec.action.direction])
        return LangDecision(Turn(wrong), dec.progress_analysis, dec.reasoning_todo, dec.reasoning_action,
                            dec.todo_ops).to_json()

    def decide_vis(self, payload: PromptPayload) -> str:
        return self.inner.decide_vis(payload)


def faulty_wrapper(inner, error_rate: float, seed: int) -> FaultyBackend:
    return FaultyBackend(inner, error_rate, seed)
