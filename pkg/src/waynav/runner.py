"""Episode execution: decide, ground, plan and move until stop or budget exhaustion."""

from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path as FsPath
from typing import Optional

import numpy as np

from .agent.backends import EpisodeProbe, FaultyBackend, OracleBackend
from .agent.prompts import (
    History,
    build_init_prompt,
    build_lang_prompt,
    build_recovery_prompt,
    build_verify_prompt,
    build_vis_prompt,
)
from .agent.schemas import (
    Backtrack,
    BBox,
    DoubleCheck,
    GoStair,
    LangDecision,
    Turn,
    VisDecision,
    parse_lang_response,
    parse_subgoals,
    parse_verification,
    parse_vis_response,
)
from .errors import (
    BackendError,
    BlockedAhead,
    EmptyFailure,
    GroundingDepthFailure,
    NavError,
    UnknownWaypoint,
    UnparseableDecision,
)
from .geometry import Point3, Pose, backproject, cam_to_world, wrap_angle
from .mapping import OCCUPIED, OccupancyGrid, VoxelMap
from .metrics import answers_match
from .planner.grid2d import Path, plan_to
from .planner.vis3d import ALTITUDE_BAND, MAX_WAYPOINT_STEP, direction_constrained_waypoint, plan_3d
from .scb import WaypointBuffer, assemble_recovery_context, backtrack_path, record_waypoint
from .tdm import TodoList, apply, init_list
from .world.model import (
    FORWARD_STEP,
    GROUND_VIEWS,
    MOVE_FORWARD,
    STOP,
    TURN_LEFT,
    TURN_RIGHT,
    AgentState,
    PanoramaObservation,
    View,
    WorldModel,
)
from .world.raycast import segment_clear_2d
from .world.sim import fly_to, geodesic_distance, render_panorama, render_view, step

log = logging.getLogger(__name__)

HEADING_TOLERANCE = 15.0
VERTEX_REACHED = 0.2
ARRIVE_TOLERANCE = 0.3
BACKTRACK_TOLERANCE = 0.15
CLEARANCE = 0.1
STAIR_REACH = 2.5
STAIR_ENTRY = 0.3
MIN_PROGRESS = 0.25
EXCURSION_FOR_BACKTRACK = 0.5
AERIAL_STANDOFF = 2.0
MAX_REPLANS = 2


@dataclass
class EpisodeConfig:
    max_steps: int = 500
    success_radius: Optional[float] = None  # None: the task's own radius
    tdm: bool = True
    scb: bool = True
    seed: int = 0
    lang_calls_cap: int = 50
    round_steps: int = 20
    parse_retries: int = 2
    blocked_rounds_trigger: int = 3
    max_backtracks: int = 5

    def __post_init__(self):
        for name in ("max_steps", "lang_calls_cap", "round_steps", "blocked_rounds_trigger"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.parse_retries < 0 or self.max_backtracks < 0:
            raise ValueError("retry and backtrack caps must be non-negative")
        if self.success_radius is not None and not self.success_radius > 0:
            raise ValueError("success_radius must be positive")

    @classmethod
    def ablation(cls, name: str, **kw) -> "EpisodeConfig":
        """``none`` (full system), ``tdm``, ``scb`` or ``both`` removed."""
        flags = {"none": (True, True), "tdm": (False, True), "scb": (True, False), "both": (False, False)}
        if name not in flags:
            raise ValueError(f"unknown ablation {name!r}")
        tdm, scb = flags[name]
        return cls(tdm=tdm, scb=scb, **kw)


@dataclass
class EpisodeTrace:
    world: str
    seed: int
    task: object = None
    records: list[dict] = field(default_factory=list)
    final: dict = field(default_factory=dict)

    def add(self, kind: str, **data) -> dict:
        rec = {"type": kind, "seq": len(self.records)}
        rec.update(data)
        self.records.append(rec)
        return rec

    def of_type(self, kind: str) -> list[dict]:
        return [r for r in self.records if r["type"] == kind]

    def poses(self) -> list[Pose]:
        """Start pose followed by the pose after every low-level step."""
        out = []
        for r in self.records:
            if r["type"] == "episode":
                out.append(Pose.from_dict(r["start"]))
            elif r["type"] == "step":
                out.append(Pose.from_dict(r["pose"]))
        return out

    def to_jsonl(self) -> str:
        lines = [json.dumps(r, sort_keys=True) for r in self.records]
        lines.append(json.dumps(dict(self.final, type="final"), sort_keys=True))
        return "\n".join(lines) + "\n"

    def file_name(self) -> str:
        return f"{self.world}_{self.seed}.trace.jsonl"

    def write(self, directory) -> FsPath:
        d = FsPath(directory)
        d.mkdir(parents=True, exist_ok=True)
        p = d / self.file_name()
        p.write_text(self.to_jsonl())
        return p

    @classmethod
    def load(cls, path) -> "EpisodeTrace":
        records = [json.loads(line) for line in FsPath(path).read_text().splitlines() if line.strip()]
        if not records or records[-1].get("type") != "final":
            raise ValueError(f"{path}: trace has no final record")
        final = dict(records[-1])
        final.pop("type")
        head = records[0]
        return cls(head.get("world", ""), head.get("seed", 0), None, records[:-1], final)


class _Terminate(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


def _representative_pixels(sel, width: int, height: int):
    """Box centre first, then outward ring by ring, staying inside the box."""
    if isinstance(sel, BBox):
        u0, v0, u1, v1 = sel.u_min, sel.v_min, sel.u_max, sel.v_max
    else:
        u0 = u1 = sel.u
        v0 = v1 = sel.v
    cu, cv = sel.center
    us = np.arange(max(u0, 0), min(u1, width - 1) + 1)
    vs = np.arange(max(v0, 0), min(v1, height - 1) + 1)
    uu, vv = np.meshgrid(us, vs)
    uu, vv = uu.ravel(), vv.ravel()
    ring = np.maximum(np.abs(uu - cu), np.abs(vv - cv))
    d2 = (uu - cu) ** 2 + (vv - cv) ** 2
    order = np.lexsort((uu, vv, d2, ring))
    return zip(uu[order].tolist(), vv[order].tolist())


def resolve_target_point(vis: VisDecision, view: View, pose: Pose, yaw_offset: Optional[float] = None) -> Point3:
    """World point under the representative pixel of the selection."""
    if vis.select is None:
        raise GroundingDepthFailure("no selection")
    k = view.intrinsics
    offset = view.yaw_offset if yaw_offset is None else yaw_offset
    for u, v in _representative_pixels(vis.select, k.width, k.height):
        d = float(view.depth[v, u])
        if math.isfinite(d) and d > 0.0:
            return cam_to_world(backproject(u, v, d, k), pose, offset, view.pitch)
    raise GroundingDepthFailure(f"no valid depth inside selection {vis.select}")


def _clearance(g: OccupancyGrid, occ: np.ndarray, x: float, y: float, limit: float = 2 * CLEARANCE) -> float:
    """Distance from (x, y) to the nearest occupied cell centre, capped at ``limit``."""
    r, c = g.index_of(x, y)
    k = int(math.ceil(limit / g.resolution)) + 1
    r0, c0 = max(r - k, 0), max(c - k, 0)
    rr, cc = np.nonzero(occ[r0 : r + k + 1, c0 : c + k + 1])
    if rr.size == 0:
        return limit
    cx = g.origin[0] + (cc + c0 + 0.5) * g.resolution
    cy = g.origin[1] + (rr + r0 + 0.5) * g.resolution
    return float(min(limit, np.hypot(cx - x, cy - y).min()))


def _pose_dict(p: Pose) -> dict:
    return p.to_dict()


class _Episode:
    def __init__(self, world: WorldModel, backend, config: EpisodeConfig):
        self.world = world
        self.cfg = config
        self.task = world.task
        self.radius = config.success_radius or world.task.success_radius
        self.aerial = world.is_aerial
        self.state = AgentState(world.task.start)
        self.probe = EpisodeProbe(world.task.start)
        self.backend = backend.for_episode(world, self.probe) if hasattr(backend, "for_episode") else backend
        self.trace = EpisodeTrace(world.name, config.seed, world.task)
        if hasattr(self.backend, "trace_hook"):
            self.backend.trace_hook = lambda **kw: self.trace.add("wire", **kw)
        self.buffer = WaypointBuffer()
        self.history = History()
        self.todo: Optional[TodoList] = None
        self.frames: dict[str, View] = {}
        self.grids: dict[int, OccupancyGrid] = {}
        self.voxels = VoxelMap(world.resolution, world.voxels.occupied.shape) if self.aerial else None
        self.steps = 0
        self.lang_calls = 0
        self.vis_calls = 0
        self.backtracks = 0
        self.path_length = 0.0
        self.oracle_success = False
        self.stopped = False
        self.answer: Optional[str] = None
        self.blocked_streak = 0
        self.failed_verifications = 0
        self.excursion: dict[int, float] = {}
        self.goal_sites = tuple(world.task.goal_positions)

    # ---- bookkeeping -------------------------------------------------------------

    @property
    def pose(self) -> Pose:
        return self.state.pose

    def grid(self, floor: int) -> OccupancyGrid:
        if floor not in self.grids:
            self.grids[floor] = OccupancyGrid(self.world.resolution)
        return self.grids[floor]

    def within_goal(self, pose: Pose) -> bool:
        g = min(math.dist(pose.xyz, (s.x, s.y, s.z)) for s in self.goal_sites)
        if self.aerial and g > self.radius:
            return False  # straight-line distance bounds the flight distance from below
        return geodesic_distance(self.world, pose, self.goal_sites) <= self.radius

    def integrate(self, pose: Pose, view: View):
        if self.aerial:
            self.voxels.integrate_view(pose, view)
        else:
            self.grid(pose.floor_id).integrate_view(pose, view)

    def observe(self) -> PanoramaObservation:
        pano = render_panorama(self.world, self.pose)
        for v in pano.views.values():
            self.integrate(self.pose, v)
        return pano

    def _store(self, key: str, view: View):
        self.frames[key] = View(view.name, view.depth.astype(np.float32), view.semantic.astype(np.int16),
                                view.intrinsics, view.yaw_offset, view.pitch, view.max_range)

    def do_step(self, action: str, target=None) -> bool:
        """One low-level action on the true world; returns False on collision."""
        if self.steps >= self.cfg.max_steps:
            raise _Terminate("max_steps")
        before = self.pose
        if target is not None:
            self.state = fly_to(self.world, self.state, *target)
            name = "fly_to"
        else:
            self.state = step(self.world, self.state, action)
            name = action
        self.steps += 1
        moved = math.dist(before.xyz, self.pose.xyz)
        self.path_length += moved
        key = None
        if not self.state.stopped:
            view = render_view(self.world, self.pose)
            self.integrate(self.pose, view)
            key = f"s{self.steps}"
            self._store(key, view)
        if not self.oracle_success and self.within_goal(self.pose):
            self.oracle_success = True
        for rec in self.buffer.records:
            if rec.pose.floor_id == self.pose.floor_id:
                d = math.hypot(self.pose.x - rec.pose.x, self.pose.y - rec.pose.y)
                if d > self.excursion.get(rec.id, 0.0):
                    self.excursion[rec.id] = d
        rec = {"step": self.steps, "action": name, "pose": _pose_dict(self.pose),
               "collided": self.state.collided_last_step, "frame": key}
        if self.todo is not None:
            rec["tdm_revision"] = self.todo.revision
        self.trace.add("step", **rec)
        return not self.state.collided_last_step

    def teleport(self, pose: Pose, how: str):
        if self.steps >= self.cfg.max_steps:
            raise _Terminate("max_steps")
        before = self.pose
        self.state = AgentState(pose)
        self.steps += 1
        self.path_length += math.dist(before.xyz, pose.xyz)
        view = render_view(self.world, pose)
        self.integrate(pose, view)
        key = f"s{self.steps}"
        self._store(key, view)
        if not self.oracle_success and self.within_goal(pose):
            self.oracle_success = True
        rec = {"step": self.steps, "action": how, "pose": _pose_dict(pose), "collided": False, "frame": key}
        if self.todo is not None:
            rec["tdm_revision"] = self.todo.revision
        self.trace.add("step", **rec)

    # ---- backend calls ---------------------------------------------------------------

    def call_lang(self, payload, parse):
        last = None
        for attempt in range(self.cfg.parse_retries + 1):
            if self.lang_calls >= self.cfg.lang_calls_cap:
                raise _Terminate("lang_cap")
            self.lang_calls += 1
            raw = self.backend.decide_lang(payload)
            try:
                return parse(raw), raw
            except UnparseableDecision as e:
                last = e
                self.trace.add("warning", what="unparseable language response", attempt=attempt, raw=raw,
                               error=str(e))
        raise last

    def call_vis(self, payload, width: int, height: int):
        last = None
        for attempt in range(self.cfg.parse_retries + 1):
            self.vis_calls += 1
            raw = self.backend.decide_vis(payload)
            try:
                return parse_vis_response(raw, width, height), raw
            except UnparseableDecision as e:
                last = e
                self.trace.add("warning", what="unparseable vision response", attempt=attempt, raw=raw,
                               error=str(e))
        raise last

    def sync_probe(self, pano):
        self.probe.pose = self.pose
        self.probe.panorama = pano
        self.probe.todo = self.todo
        self.probe.buffer = self.buffer

    def apply_ops(self, decision: LangDecision, source: str):
        if self.todo is None:
            return
        self.todo, warnings = apply(self.todo, list(decision.todo_ops))
        self.trace.add("tdm", source=source, revision=self.todo.revision, list=self.todo.to_dict(),
                       ops=[json.loads(json.dumps(o)) for o in decision.to_dict()["todo_ops"]], warnings=warnings)

    def parsed_record(self, decision: LangDecision) -> dict:
        d = decision.to_dict()
        if self.todo is None:
            d.pop("todo_ops")
            d.pop("reasoning_todo")
        return d

    # ---- episode -------------------------------------------------------------------------

    def run(self) -> EpisodeTrace:
        t = self.task
        self.trace.add("episode", world=self.world.name, seed=self.cfg.seed, family=t.family,
                       instruction=t.instruction, start=_pose_dict(t.start), success_radius=self.radius,
                       config=asdict(self.cfg))
        self.oracle_success = self.within_goal(self.pose)
        reason = "stop"
        error = None
        try:
            pano = self.observe()
            if self.cfg.tdm:
                self.init_todo(pano)
            while not self.stopped:
                if self.lang_calls >= self.cfg.lang_calls_cap:
                    raise _Terminate("lang_cap")
                if self.steps >= self.cfg.max_steps:
                    raise _Terminate("max_steps")
                self.round()
        except _Terminate as e:
            reason = e.reason
        except BackendError as e:
            reason = "backend_error"
            error = {"kind": e.kind, "message": str(e)}
            self.trace.add("error", error_kind=e.kind, message=str(e))
        ne = geodesic_distance(self.world, self.pose, self.goal_sites)
        shortest = geodesic_distance(self.world, t.start, self.goal_sites)
        self.trace.final = {
            "success": bool(self.stopped and ne <= self.radius),
            "oracle_success": bool(self.oracle_success),
            "distance_to_goal": ne,
            "path_length": self.path_length,
            "steps_taken": self.steps,
            "stopped": self.stopped,
            "eqa_answer": self.answer,
            "eqa_correct": answers_match(self.answer, t.eqa_answer) if t.family == "EQA" else None,
            "shortest_path_length": shortest,
            "success_radius": self.radius,
            "family": t.family,
            "lang_calls": self.lang_calls,
            "vis_calls": self.vis_calls,
            "backtracks": self.backtracks,
            "termination": reason,
            "error": error,
            "final_pose": _pose_dict(self.pose),
        }
        return self.trace

    def init_todo(self, pano):
        self.sync_probe(pano)
        payload = build_init_prompt(self.task, pano, self.world.labels)
        try:
            subgoals, raw = self.call_lang(payload, parse_subgoals)
            self.todo = init_list(subgoals)
        except UnparseableDecision:
            raw = None
            self.todo = init_list([self.task.instruction])
            self.trace.add("warning", what="sub-goal initialisation failed; tracking the instruction as one item")
        self.trace.add("tdm", source="init", revision=self.todo.revision, list=self.todo.to_dict(), ops=[],
                       warnings=[], raw=raw)

    def new_waypoint(self, pano: PanoramaObservation, note: str) -> int:
        p = self.pose
        caption = f"wp{self.buffer.next_id}: ({p.x:.1f}, {p.y:.1f}) floor {p.floor_id} yaw {p.yaw:.0f}, {note}"
        k = record_waypoint(self.buffer, p, f"wp{self.buffer.next_id}", caption)
        for name, v in pano.views.items():
            self._store(f"wp{k}/{name}", v)
        self.excursion[k] = 0.0
        self.trace.add("waypoint", id=k, pose=_pose_dict(p), panorama_key=f"wp{k}", caption=caption)
        return k

    def round(self):
        pano = self.observe()
        k = self.new_waypoint(pano, "decision")
        self.sync_probe(pano)
        payload = build_lang_prompt(self.task, pano, self.history, self.todo, self.world.labels, self.steps,
                                    self.aerial)
        try:
            decision, raw = self.call_lang(payload, parse_lang_response)
        except UnparseableDecision:
            self.history.add(f"wp{k}: no usable decision")
            self.after_round(blocked=True)
            return
        self.trace.add("lang", waypoint=k, raw=raw, parsed=self.parsed_record(decision),
                       warnings=list(decision.warnings))
        self.apply_ops(decision, "decide")
        self.dispatch(decision, k, pano)

    def after_round(self, blocked: bool):
        self.blocked_streak = self.blocked_streak + 1 if blocked else 0
        if (blocked and self.cfg.scb and self.blocked_streak >= self.cfg.blocked_rounds_trigger
                and self.backtracks < self.cfg.max_backtracks):
            target = self.synthetic_target()
            self.blocked_streak = 0
            if target is not None:
                self.backtrack(target, "blocked")

    def synthetic_target(self) -> Optional[int]:
        """Most recent waypoint the agent left by a turn and then moved well away from."""
        for rec in reversed(self.buffer.records):
            if rec.chosen_direction and self.excursion.get(rec.id, 0.0) >= EXCURSION_FOR_BACKTRACK \
                    and rec.pose.floor_id == self.pose.floor_id:
                return rec.id
        return None

    def dispatch(self, decision: LangDecision, k: int, pano: PanoramaObservation):
        a = decision.action
        if isinstance(a, DoubleCheck):
            self.double_check(a, pano, k)
        elif isinstance(a, GoStair):
            self.go_stair(a, k)
        elif isinstance(a, Backtrack):
            if not self.cfg.scb:
                self.trace.add("warning", what="backtrack requested with SCB disabled; ignored")
                self.history.add(f"wp{k}: backtrack unavailable")
                self.after_round(blocked=True)
            elif self.backtracks >= self.cfg.max_backtracks:
                self.trace.add("warning", what="backtrack cap reached; ignored")
                self.after_round(blocked=True)
            else:
                self.blocked_streak = 0
                self.backtrack(a.waypoint_id, "decision")
        else:
            self.buffer.get(k).chosen_direction = a.direction
            start = self.pose
            ok = self.turn(a.direction, decision, pano, k)
            moved = math.dist(start.xyz, self.pose.xyz)
            self.history.add(f"wp{k}: went {a.direction}, moved {moved:.1f} m" + ("" if ok else ", blocked"),
                             f"wp{k}/{a.direction}")
            self.after_round(blocked=(not ok) or moved < MIN_PROGRESS)

    def double_check(self, a: DoubleCheck, pano, k: int):
        self.sync_probe(pano)
        payload = build_verify_prompt(self.task, pano, self.world.labels, a.answer, self.todo, self.steps)
        try:
            ver, raw = self.call_lang(payload, parse_verification)
        except UnparseableDecision:
            ver, raw = None, None
        confirmed = bool(ver and ver.confirm)
        self.trace.add("verify", waypoint=k, raw=raw, confirm=confirmed, answer=a.answer)
        if confirmed:
            self.answer = a.answer
            self.do_step(STOP)
            self.stopped = True
            return
        self.failed_verifications += 1
        if self.failed_verifications >= 2:
            self.trace.add("warning", what="stop rejected twice in a row; continuing")
        self.history.add(f"wp{k}: stop not confirmed")
        self.after_round(blocked=True)

    def go_stair(self, a: GoStair, k: int):
        """Walk to the nearest matching staircase entry within reach, then change floor."""
        p = self.pose
        want = p.floor_id + (1 if a.direction == "up" else -1)
        best = None
        for link in self.world.stair_links:
            for fa, ca, fb, cb in ((link.floor_a, link.cell_a, link.floor_b, link.cell_b),
                                   (link.floor_b, link.cell_b, link.floor_a, link.cell_a)):
                if fa != p.floor_id or fb != want:
                    continue
                x, y = self.world.cell_center(*ca)
                d = math.hypot(x - p.x, y - p.y)
                if d <= STAIR_REACH and (best is None or d < best[0]):
                    best = (d, (x, y), fb, cb)
        if best is None:
            self.trace.add("warning", what=f"no staircase {a.direction} within {STAIR_REACH} m")
            self.history.add(f"wp{k}: no staircase {a.direction} here")
            self.after_round(blocked=True)
            return
        _, (ex, ey), fb, cb = best
        self.walk_to(Point3(ex, ey, p.z), self.cfg.round_steps, STAIR_ENTRY, exact=True)
        if math.hypot(ex - self.pose.x, ey - self.pose.y) > STAIR_ENTRY:
            self.trace.add("warning", what="could not reach the staircase entry")
            self.history.add(f"wp{k}: could not reach the staircase")
            self.after_round(blocked=True)
            return
        x, y = self.world.cell_center(*cb)
        self.teleport(Pose(x, y, self.world.floor_z(fb), self.pose.yaw, fb), "go_stair")
        self.history.add(f"wp{k}: took the stairs {a.direction} to floor {fb}")
        self.after_round(blocked=False)

    # ---- grounding and motion --------------------------------------------------------------

    def turn(self, direction: str, decision: LangDecision, pano: PanoramaObservation, k: int) -> bool:
        view = pano.views[direction]
        payload = build_vis_prompt(self.task, direction, view, decision.reasoning_action or decision.progress_analysis,
                                   self.world.labels, self.pose, self.steps)
        try:
            vis, raw = self.call_vis(payload, view.intrinsics.width, view.intrinsics.height)
        except UnparseableDecision:
            vis, raw = VisDecision(None), None
        target = None
        failure = None
        try:
            target = resolve_target_point(vis, view, self.pose, GROUND_VIEWS[direction])
        except GroundingDepthFailure as e:
            failure = str(e)
        self.trace.add("vis", waypoint=k, direction=direction, raw=raw, parsed=vis.to_dict(),
                       warnings=list(vis.warnings), target=None if target is None else [target.x, target.y, target.z],
                       failure=failure)
        if self.aerial:
            return self.fly_round(direction, view, target)
        if target is None:
            return False
        return self.walk_to(target, self.cfg.round_steps, ARRIVE_TOLERANCE)

    def plan(self, target: Point3, exact: bool = False) -> Optional[Path]:
        try:
            return plan_to(self.grid(self.pose.floor_id), self.pose, target, exact_target=exact)
        except NavError as e:
            self.trace.add("plan_failure", error=type(e).__name__, message=str(e),
                           target=[target.x, target.y])
            return None

    def forward_clear(self) -> bool:
        """Belief check of the next forward step, with a little lateral clearance."""
        g = self.grid(self.pose.floor_id)
        p = self.pose
        hx, hy = p.heading()
        reach = FORWARD_STEP + CLEARANCE
        ox, oy = g.origin
        occ = np.ascontiguousarray(g.cells == OCCUPIED)
        if not segment_clear_2d(occ, g.resolution, ox, oy, p.x, p.y, p.x + reach * hx, p.y + reach * hy):
            return False
        if all(segment_clear_2d(occ, g.resolution, ox, oy, p.x + lat * hy, p.y - lat * hx,
                                p.x + lat * hy + reach * hx, p.y - lat * hx + reach * hy)
               for lat in (CLEARANCE, -CLEARANCE)):
            return True
        # already hugging something: fine as long as the step does not close in further
        now = _clearance(g, occ, p.x, p.y)
        after = _clearance(g, occ, p.x + FORWARD_STEP * hx, p.y + FORWARD_STEP * hy)
        return after >= min(now, CLEARANCE) - 1e-9

    def walk_to(self, target: Point3, max_steps: Optional[int], tolerance: float, exact: bool = False,
                path: Optional[Path] = None) -> bool:
        """Follow a belief-map path toward ``target``; True if it arrives (or the step budget ends cleanly)."""
        if path is None:
            path = self.plan(target, exact)
        if path is None:
            return False
        goal = path.end
        idx = 1
        used = 0
        replans = 0
        collisions = 0
        while max_steps is None or used < max_steps:
            p = self.pose
            if math.hypot(goal[0] - p.x, goal[1] - p.y) <= tolerance:
                return True
            wps = path.waypoints
            while idx < len(wps) - 1 and math.hypot(wps[idx][0] - p.x, wps[idx][1] - p.y) < VERTEX_REACHED:
                idx += 1
            aim = wps[min(idx, len(wps) - 1)]
            desired = math.degrees(math.atan2(aim[1] - p.y, aim[0] - p.x))
            diff = wrap_angle(desired - p.yaw)
            if abs(diff) > HEADING_TOLERANCE + 1e-9:
                self.do_step(TURN_LEFT if diff > 0 else TURN_RIGHT)
                used += 1
                continue
            if not self.forward_clear():
                if replans >= MAX_REPLANS:
                    return False
                replans += 1
                path = self.plan(target, exact)
                if path is None:
                    return False
                goal, idx = path.end, 1
                continue
            ok = self.do_step(MOVE_FORWARD)
            used += 1
            if not ok:
                collisions += 1
                if collisions >= 2:
                    return False
        return True

    def turn_to_yaw(self, yaw: float):
        for _ in range(12):
            diff = wrap_angle(yaw - self.pose.yaw)
            if abs(diff) < 1e-6:
                return
            self.do_step(TURN_LEFT if diff > 0 else TURN_RIGHT)

    def fly_round(self, direction: str, view: View, target: Optional[Point3]) -> bool:
        p = self.pose
        goal = None
        if target is not None:
            v = np.array([target.x - p.x, target.y - p.y, target.z - p.z])
            n = float(np.linalg.norm(v))
            back = min(AERIAL_STANDOFF, 0.5 * n)
            g = np.array(p.xyz) + v * (n - back) / n if n > 1e-9 else np.array(p.xyz)
            g[2] = min(max(g[2], ALTITUDE_BAND[0]), ALTITUDE_BAND[1])
            goal = Point3(*(float(x) for x in g))
        path = None
        if goal is not None:
            try:
                path = plan_3d(self.voxels, Point3(*p.xyz), goal)
            except NavError as e:
                self.trace.add("plan_failure", error=type(e).__name__, message=str(e), target=list(goal.as_array()))
        if path is None:
            hint = self.task.direction_hint
            if hint is None:
                return False
            try:
                wp = direction_constrained_waypoint(self.task.start, p, hint, self.pano_front_depth(direction))
            except BlockedAhead as e:
                self.trace.add("plan_failure", error="BlockedAhead", message=str(e))
                return False
            self.trace.add("fallback", waypoint=[wp.x, wp.y, wp.z])
            path = Path.from_points([p.xyz, (wp.x, wp.y, wp.z)])
        return self.fly_path(path, MAX_WAYPOINT_STEP)

    def pano_front_depth(self, direction: str) -> np.ndarray:
        return self.probe.panorama.views[direction].depth

    def fly_path(self, path: Path, horizon: float) -> bool:
        """Fly the first ``horizon`` metres of a 3-D path in segments of at most 5 m."""
        left = horizon
        pts = path.waypoints
        for a, b in zip(pts, pts[1:]):
            seg = math.dist(a, b)
            if seg < 1e-9:
                continue
            frac = min(1.0, left / seg)
            end = tuple(a[i] + (b[i] - a[i]) * frac for i in range(3))
            if not self.do_step("fly_to", end):
                return False
            left -= seg * frac
            if left <= 1e-9:
                break
        return True

    # ---- second chance ---------------------------------------------------------------------

    def backtrack(self, k: int, why: str):
        self.backtracks += 1
        try:
            _, panorama_key, failed_dir, traj = assemble_recovery_context(self.buffer, k, self.trace)
        except (EmptyFailure, UnknownWaypoint) as e:
            self.trace.add("backtrack", target=k, reason=why, status="skipped", error=str(e))
            return
        wp = self.buffer.get(k)
        origin = _pose_dict(self.pose)
        ok = True
        if self.aerial:
            try:
                path = plan_3d(self.voxels, Point3(*self.pose.xyz), Point3(*wp.pose.xyz))
                ok = self.fly_path(path, math.inf)
            except NavError as e:
                ok = False
                self.trace.add("plan_failure", error=type(e).__name__, message=str(e))
        else:
            try:
                path = backtrack_path(self.buffer, k, self.grid(self.pose.floor_id), self.pose)
            except NavError as e:
                ok = False
                self.trace.add("plan_failure", error=type(e).__name__, message=str(e))
            if ok:
                ok = self.walk_to(Point3(wp.pose.x, wp.pose.y, wp.pose.z), None, BACKTRACK_TOLERANCE,
                                  exact=True, path=path)
            self.turn_to_yaw(wp.pose.yaw)
        err = math.dist(self.pose.xyz, wp.pose.xyz)
        self.trace.add("backtrack", target=k, reason=why, status="arrived" if ok else "failed", pose_error=err,
                       origin=origin, pose=_pose_dict(self.pose))
        if not ok:
            return
        self.recover(k, failed_dir, panorama_key, traj)

    def recover(self, origin: int, failed_dir: str, panorama_key: str, traj):
        pano = self.observe()
        k = self.new_waypoint(pano, f"returned to wp{origin}")
        self.sync_probe(pano)
        frames = [(key, self.frames[key]) for key in traj.frames]
        payload = build_recovery_prompt(self.task, pano, failed_dir, frames, self.world.labels, self.history,
                                        self.todo, self.steps, self.aerial)
        try:
            decision, raw = self.call_lang(payload, parse_lang_response)
        except UnparseableDecision:
            self.after_round(blocked=True)
            return
        self.trace.add("recovery", waypoint=k, origin=origin, failed_direction=failed_dir,
                       panorama_key=panorama_key, evidence=traj.to_dict(), raw=raw,
                       parsed=self.parsed_record(decision), warnings=list(decision.warnings))
        self.apply_ops(decision, "recover")
        self.dispatch(decision, k, pano)


def run_episode(world: WorldModel, backend, config: Optional[EpisodeConfig] = None) -> EpisodeTrace:
    return _Episode(world, backend, config or EpisodeConfig()).run()


# ---- batches ------------------------------------------------------------------------------


@dataclass(frozen=True)
class BackendSpec:
    """Picklable recipe for a backend; ``seed`` only reseeds the fault injector."""

    kind: str = "oracle"  # oracle | forgetful | http
    error_rate: float = 0.0
    endpoint: Optional[str] = None
    timeout: float = 180.0
    max_retries: int = 3

    def build(self, seed: int):
        if self.kind == "http":
            from .remote import EndpointConfig, HttpBackend

            if not self.endpoint:
                raise ValueError("http backend needs an endpoint")
            return HttpBackend(EndpointConfig(self.endpoint, timeout=self.timeout, max_retries=self.max_retries))
        if self.kind not in ("oracle", "forgetful"):
            raise ValueError(f"unknown backend {self.kind!r}")
        inner = OracleBackend(forgetful=self.kind == "forgetful")
        if self.error_rate > 0.0:
            return FaultyBackend(inner, self.error_rate, seed)
        return inner


def _run_job(args) -> dict:
    world_path, spec, config, out_dir = args
    from .world.io import load_world

    world = load_world(world_path)
    trace = run_episode(world, spec.build(config.seed), config)
    path = trace.write(out_dir)
    return {"world": world.name, "seed": config.seed, "trace": str(path), "final": trace.final}


def run_batch(world_paths, spec: BackendSpec, seeds, config: EpisodeConfig, out_dir, jobs: Optional[int] = None):
    """Every (world, seed) pair, each with its own trace file; results come back in job order."""
    jobs_list = []
    for wp in world_paths:
        for s in seeds:
            cfg = EpisodeConfig(**dict(asdict(config), seed=int(s)))
            jobs_list.append((str(wp), spec, cfg, str(out_dir)))
    jobs = jobs or os.cpu_count() or 1
    if jobs <= 1 or len(jobs_list) <= 1:
        return [_run_job(j) for j in jobs_list]
    with ProcessPoolExecutor(max_workers=min(jobs, len(jobs_list))) as pool:
        return list(pool.map(_run_job, jobs_list))
