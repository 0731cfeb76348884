"""Seeded synthetic worlds.

Layouts
-------
``rooms``        rooms on a lattice joined by doors along a random spanning tree
``junction``     a four-way hub whose arms are dead ends except one (backtracking fixture)
``single_room``  one open room
``aerial``       a voxel block world with labelled towers
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from ..errors import GenerationFailed
from ..geometry import Pose
from .model import (
    AERIAL,
    GROUND,
    SemanticGrid2D,
    Site,
    StairLink,
    TaskSpec,
    VoxelGrid,
    WorldModel,
)

OBJECT_LABELS = (
    "sofa", "bed", "dining table", "armchair", "television", "potted plant", "fridge",
    "oven", "sink", "toilet", "floor lamp", "bookshelf", "vase", "desk", "piano",
    "washing machine", "wardrobe", "fireplace", "aquarium", "treadmill", "bathtub",
    "grandfather clock", "coat rack", "drum kit",
)
COLORS = ("red", "blue", "green", "silver", "white", "black", "yellow", "orange")
STAIR_LABEL = "staircase"
WALL_LABEL = "wall"

DEFAULT_RADIUS = {"VLN": 3.0, "ObjectNav": 1.0, "EQA": 1.5, "AerialVLN": 3.0}
VIEWPOINT_OFFSET = 0.5


@dataclass
class GeneratorSpec:
    family: str = "ObjectNav"
    layout: str = "rooms"
    rooms_x: int = 3
    rooms_y: int = 3
    room_size: float = 4.0
    wall: float = 0.2
    door_width: float = 1.2
    floors: int = 1
    goal_floor: int = 0
    resolution: float = 0.05
    dead_end_rooms: bool = False
    n_subgoals: int = 3
    objects_per_room: int = 2
    success_radius: Optional[float] = None
    min_subgoal_separation: Optional[float] = None
    single_room_size: float = 12.0
    goal_distance: Optional[float] = None
    aerial_shape: tuple = (20, 48, 48)  # z, y, x voxels at 1 m
    max_retries: int = 40

    def validate(self):
        if not 1 <= self.floors <= 3:
            raise ValueError("floors must be within 1..3")
        if self.layout == "rooms":
            w = self.rooms_x * self.room_size / self.resolution
            h = self.rooms_y * self.room_size / self.resolution
            if max(w, h) > 256 * 4 or self.rooms_x < 1 or self.rooms_y < 1:
                raise ValueError("grid too large")
        if self.layout == "single_room" and self.single_room_size / self.resolution > 256:
            raise ValueError("grid exceeds 256 cells per side")
        if not 0 <= self.goal_floor < self.floors:
            raise ValueError("goal_floor out of range")

    def to_dict(self) -> dict:
        return asdict(self)


def _cells(m: float, res: float) -> int:
    return int(round(m / res))


@dataclass
class _Object:
    label: str
    floor: int
    r0: int
    c0: int
    r1: int  # exclusive
    c1: int
    room: tuple = ()
    viewpoints: list = field(default_factory=list)


class _Builder:
    def __init__(self, rng: np.random.Generator, spec: GeneratorSpec):
        self.rng = rng
        self.spec = spec
        self.res = spec.resolution
        self.labels: dict[int, str] = {1: WALL_LABEL}
        self.floors: list[SemanticGrid2D] = []
        self.objects: list[_Object] = []

    def label_id(self, text: str) -> int:
        for k, v in self.labels.items():
            if v == text:
                return k
        k = max(self.labels) + 1
        self.labels[k] = text
        return k

    def new_floor(self, h: int, w: int) -> SemanticGrid2D:
        g = SemanticGrid2D(np.ones((h, w), bool), np.full((h, w), 1, np.int32))
        self.floors.append(g)
        return g

    def carve(self, g: SemanticGrid2D, r0, c0, r1, c1):
        g.occupied[r0:r1, c0:c1] = False
        g.labels[r0:r1, c0:c1] = 0

    def place_object(self, floor: int, label: str, r0, c0, r1, c1, room=()) -> _Object:
        g = self.floors[floor]
        g.occupied[r0:r1, c0:c1] = True
        g.labels[r0:r1, c0:c1] = self.label_id(label)
        obj = _Object(label, floor, r0, c0, r1, c1, room)
        self.objects.append(obj)
        return obj

    def viewpoints(self, obj: _Object) -> list[Site]:
        """Free points VIEWPOINT_OFFSET in front of each side centre of the object."""
        g = self.floors[obj.floor]
        res = self.res
        cy = (obj.r0 + obj.r1) / 2 * res
        cx = (obj.c0 + obj.c1) / 2 * res
        cands = [
            (cx, obj.r0 * res - VIEWPOINT_OFFSET),
            (cx, obj.r1 * res + VIEWPOINT_OFFSET),
            (obj.c0 * res - VIEWPOINT_OFFSET, cy),
            (obj.c1 * res + VIEWPOINT_OFFSET, cy),
        ]
        out = []
        m = _cells(0.25, res)
        for x, y in cands:
            r, c = int(math.floor(y / res)), int(math.floor(x / res))
            if not (m <= r < g.height - m and m <= c < g.width - m):
                continue
            if g.occupied[r - m : r + m + 1, c - m : c + m + 1].any():
                continue
            out.append(Site(round(x, 6), round(y, 6), obj.floor * 3.0, obj.floor, obj.label))
        return out


# ---- rooms layout -----------------------------------------------------------


def _spanning_tree(rng, nx, ny):
    start = (int(rng.integers(nx)), int(rng.integers(ny)))
    seen = {start}
    stack = [start]
    edges = []
    while stack:
        x, y = stack[-1]
        nbrs = [(x + dx, y + dy) for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1))
                if 0 <= x + dx < nx and 0 <= y + dy < ny and (x + dx, y + dy) not in seen]
        if not nbrs:
            stack.pop()
            continue
        n = nbrs[int(rng.integers(len(nbrs)))]
        seen.add(n)
        edges.append(((x, y), n))
        stack.append(n)
    return edges


def _build_rooms_floor(b: _Builder, floor: int):
    s = b.spec
    res = b.res
    S = _cells(s.room_size, res)
    t = _cells(s.wall, res)
    dw = _cells(s.door_width, res)
    H, W = s.rooms_y * S + t, s.rooms_x * S + t
    g = b.new_floor(H, W)
    for i in range(s.rooms_x):
        for j in range(s.rooms_y):
            b.carve(g, j * S + t, i * S + t, (j + 1) * S, (i + 1) * S)
    edges = _spanning_tree(b.rng, s.rooms_x, s.rooms_y)
    doors = []
    for (x0, y0), (x1, y1) in edges:
        lo = t + _cells(0.4, res)
        span = S - t - dw - 2 * _cells(0.4, res)
        off = lo + int(b.rng.integers(max(span, 1)))
        if y0 == y1:
            wc = max(x0, x1) * S
            r0 = y0 * S + off
            b.carve(g, r0, wc, r0 + dw, wc + t)
            doors.append((r0 + dw / 2, wc + t / 2))
        else:
            wr = max(y0, y1) * S
            c0 = x0 * S + off
            b.carve(g, wr, c0, wr + t, c0 + dw)
            doors.append((wr + t / 2, c0 + dw / 2))
    return g, edges, doors


def _furnish_room(b: _Builder, floor: int, i: int, j: int, doors, labels_iter, count: int):
    s = b.spec
    res = b.res
    S = _cells(s.room_size, res)
    t = _cells(s.wall, res)
    g = b.floors[floor]
    r_lo, c_lo, r_hi, c_hi = j * S + t, i * S + t, (j + 1) * S, (i + 1) * S
    keep_clear = _cells(1.0, res)
    placed = []
    for _ in range(count):
        for _attempt in range(30):
            h = _cells(float(b.rng.choice([0.5, 0.6, 0.8])), res)
            w = _cells(float(b.rng.choice([0.5, 0.6, 0.8])), res)
            side = int(b.rng.integers(4))
            if side == 0:
                r0, c0 = r_lo, int(b.rng.integers(c_lo, c_hi - w))
            elif side == 1:
                r0, c0 = r_hi - h, int(b.rng.integers(c_lo, c_hi - w))
            elif side == 2:
                r0, c0 = int(b.rng.integers(r_lo, r_hi - h)), c_lo
            else:
                r0, c0 = int(b.rng.integers(r_lo, r_hi - h)), c_hi - w
            r1, c1 = r0 + h, c0 + w
            if any(r0 - keep_clear < dr < r1 + keep_clear and c0 - keep_clear < dc < c1 + keep_clear for dr, dc in doors):
                continue
            gap = _cells(0.9, res)
            if any(not (r1 + gap <= o.r0 or o.r1 + gap <= r0 or c1 + gap <= o.c0 or o.c1 + gap <= c0) for o in placed):
                continue
            if g.occupied[r0:r1, c0:c1].any():
                continue
            placed.append(b.place_object(floor, next(labels_iter), r0, c0, r1, c1, (i, j)))
            break
    return placed


def _room_center(spec: GeneratorSpec, i: int, j: int, floor: int = 0) -> tuple[float, float]:
    return ((i + 0.5) * spec.room_size + spec.wall / 2, (j + 0.5) * spec.room_size + spec.wall / 2)


# ---- top level ----------------------------------------------------------------


def generate_world(seed: int, spec: GeneratorSpec | None = None, name: str | None = None) -> WorldModel:
    """Build a world from ``seed``; the same (seed, spec) always yields the same world."""
    spec = spec or GeneratorSpec()
    spec.validate()
    layout = "aerial" if spec.family == "AerialVLN" else spec.layout
    name = name or f"{layout}_{spec.family.lower()}_{seed}"
    last = None
    for attempt in range(spec.max_retries):
        rng = np.random.default_rng([seed, attempt])
        try:
            if layout == "aerial":
                world = _gen_aerial(rng, spec, name)
            elif spec.layout == "junction":
                world = _gen_junction(rng, spec, name)
            elif spec.layout == "single_room":
                world = _gen_single_room(rng, spec, name)
            elif spec.layout == "rooms":
                world = _gen_rooms(rng, spec, name)
            else:
                raise ValueError(f"unknown layout {spec.layout!r}")
        except _Retry as e:
            last = e
            continue
        return world
    raise GenerationFailed(f"could not satisfy {spec.layout}/{spec.family} after {spec.max_retries} tries: {last}")


class _Retry(Exception):
    pass


def _finish_task(b: _Builder, spec: GeneratorSpec, rng, start: Pose, goal_obj: _Object,
                 subgoal_objs: list[_Object] | None = None) -> TaskSpec:
    radius = spec.success_radius or DEFAULT_RADIUS[spec.family]
    goals = b.viewpoints(goal_obj)
    if not goals:
        raise _Retry("goal object has no viewpoint")
    fam = spec.family
    if fam == "ObjectNav":
        return TaskSpec(fam, f"Find the {goal_obj.label}.", start, goals, radius, target_label=goal_obj.label)
    if fam == "EQA":
        color = str(rng.choice(COLORS))
        return TaskSpec(fam, f"What color is the {goal_obj.label}?", start, goals, radius,
                        eqa_answer=color, target_label=goal_obj.label)
    if fam == "VLN":
        subs = []
        for o in subgoal_objs or [goal_obj]:
            vps = b.viewpoints(o)
            if not vps:
                raise _Retry("subgoal without viewpoint")
            subs.append(vps[0])
        final = subs[-1]
        parts = [f"walk to the {s.label}" for s in subs[:-1]]
        text = ", then ".join(parts + [f"stop near the {final.label}"])
        text = text[0].upper() + text[1:] + "."
        return TaskSpec(fam, text, start, [final], radius, ordered_subgoal_positions=subs, target_label=final.label)
    raise ValueError(fam)


def _world_from(b: _Builder, spec, name, task, stair_links=()) -> WorldModel:
    return WorldModel(name=name, resolution=b.res, task=task, labels=dict(b.labels), variant=GROUND,
                      floors=b.floors, stair_links=list(stair_links))


def _check_reachable(world: WorldModel, sites):
    from .sim import geodesic_distance

    for s in sites:
        if not math.isfinite(geodesic_distance(world, world.task.start, (s,))):
            raise _Retry(f"unreachable site {s}")


def _gen_rooms(rng, spec: GeneratorSpec, name: str) -> WorldModel:
    b = _Builder(rng, spec)
    labels = list(OBJECT_LABELS)
    rng.shuffle(labels)
    labels_iter = iter(labels * 4)
    per_floor = []
    for f in range(spec.floors):
        g, edges, doors = _build_rooms_floor(b, f)
        per_floor.append((edges, doors))
    stair_links = []
    stair_slots = []
    for f in range(spec.floors - 1):
        i, j = int(rng.integers(spec.rooms_x)), int(rng.integers(spec.rooms_y))
        ends = []
        for fl in (f, f + 1):
            objs = _furnish_room(b, fl, i, j, per_floor[fl][1], iter([STAIR_LABEL]), 1)
            if not objs:
                raise _Retry("no room for stairs")
            vps = b.viewpoints(objs[0])
            if not vps:
                raise _Retry("stairs without viewpoint")
            ends.append((fl, b.floors[fl], vps[0]))
        cells = [(int(math.floor(v.y / b.res)), int(math.floor(v.x / b.res))) for _, _, v in ends]
        stair_links.append(StairLink(f, cells[0], f + 1, cells[1]))
        stair_slots.append((f, i, j))
    for f in range(spec.floors):
        for i in range(spec.rooms_x):
            for j in range(spec.rooms_y):
                _furnish_room(b, f, i, j, per_floor[f][1], labels_iter, spec.objects_per_room)
    furniture = [o for o in b.objects if o.label != STAIR_LABEL]
    # unique labels only, so a target name identifies one object
    counts: dict[str, int] = {}
    for o in furniture:
        counts[o.label] = counts.get(o.label, 0) + 1
    unique = [o for o in furniture if counts[o.label] == 1 and b.viewpoints(o)]
    if not unique:
        raise _Retry("no uniquely labelled object")

    si, sj = int(rng.integers(spec.rooms_x)), int(rng.integers(spec.rooms_y))
    sx, sy = _room_center(spec, si, sj)
    start = Pose(sx, sy, 0.0, float(30 * int(rng.integers(12))), 0)
    tmp = WorldModel(name, b.res, TaskSpec("ObjectNav", "", start, [Site(sx, sy)], 1.0), dict(b.labels),
                     floors=b.floors, stair_links=stair_links)
    if not tmp.is_free(start):
        raise _Retry("start blocked")
    from .sim import geodesic_distance

    def gd(site_a: Site, site_b: Site) -> float:
        # one field per source; geodesic distance is symmetric
        p = Pose(site_b.x, site_b.y, site_b.z, 0.0, site_b.floor_id)
        return geodesic_distance(tmp, p, (site_a,))

    start_site = Site(sx, sy, 0.0, 0, "")
    radius = spec.success_radius or DEFAULT_RADIUS[spec.family]
    on_goal_floor = [o for o in unique if o.floor == spec.goal_floor and o.room != (si, sj)]
    if spec.family == "VLN":
        sep = spec.min_subgoal_separation or 2 * radius + 0.5
        cands = [o for o in on_goal_floor]
        rng.shuffle(cands)
        chain: list[_Object] = []
        prev = start_site
        for o in cands:
            vp = b.viewpoints(o)[0]
            d_prev = gd(prev, vp)
            if not math.isfinite(d_prev) or d_prev < sep or d_prev > 14.0:
                continue
            if any(gd(b.viewpoints(c)[0], vp) < sep for c in chain):
                continue
            if gd(start_site, vp) < radius + 1.0:
                continue
            chain.append(o)
            prev = vp
            if len(chain) == spec.n_subgoals:
                break
        if len(chain) < spec.n_subgoals:
            raise _Retry("could not chain subgoals")
        task = _finish_task(b, spec, rng, start, chain[-1], chain)
    else:
        cands = []
        for o in on_goal_floor:
            d = min(gd(start_site, v) for v in b.viewpoints(o))
            if math.isfinite(d) and d > (spec.success_radius or DEFAULT_RADIUS[spec.family]) + 1.0:
                if spec.goal_distance is None or d <= spec.goal_distance:
                    cands.append(o)
        if not cands:
            raise _Retry("no goal candidate")
        goal = cands[int(rng.integers(len(cands)))]
        task = _finish_task(b, spec, rng, start, goal)
    world = _world_from(b, spec, name, task, stair_links)
    sites = list(task.goal_positions) + list(task.ordered_subgoal_positions or [])
    _check_reachable(world, sites)
    if spec.dead_end_rooms and not _has_dead_end_branch(spec, per_floor[0][0], (si, sj)):
        raise _Retry("no dead-end branch")
    return world


def _has_dead_end_branch(spec, edges, start_slot) -> bool:
    """Some room with >= 3 doors has a neighbouring subtree that is a single leaf room."""
    deg: dict = {}
    for a, c in edges:
        deg[a] = deg.get(a, 0) + 1
        deg[c] = deg.get(c, 0) + 1
    for a, c in edges:
        for hub, leaf in ((a, c), (c, a)):
            if deg.get(hub, 0) >= 3 and deg.get(leaf, 0) == 1 and leaf != start_slot:
                return True
    return False


def _gen_single_room(rng, spec: GeneratorSpec, name: str) -> WorldModel:
    b = _Builder(rng, spec)
    res = b.res
    n = _cells(spec.single_room_size, res)
    t = _cells(spec.wall, res)
    g = b.new_floor(n + 2 * t, n + 2 * t)
    b.carve(g, t, t, n + t, n + t)
    label = str(rng.choice(OBJECT_LABELS))
    c_mid = (n + 2 * t) // 2
    half = _cells(0.3, res)
    # object against the north wall, start facing it
    obj = b.place_object(0, label, n + t - 2 * half, c_mid - half, n + t, c_mid + half)
    vps = b.viewpoints(obj)
    target = min(vps, key=lambda s: s.y)
    d = spec.goal_distance if spec.goal_distance is not None else 3.0
    start = Pose(target.x, target.y - d, 0.0, 90.0, 0)
    radius = spec.success_radius or DEFAULT_RADIUS[spec.family]
    if spec.family == "VLN":
        task = TaskSpec("VLN", f"Stop near the {label}.", start, [target], radius,
                        ordered_subgoal_positions=[target], target_label=label)
    elif spec.family == "EQA":
        task = TaskSpec("EQA", f"What color is the {label}?", start, vps, radius,
                        eqa_answer=str(rng.choice(COLORS)), target_label=label)
    else:
        task = TaskSpec("ObjectNav", f"Find the {label}.", start, vps, radius, target_label=label)
    return _world_from(b, spec, name, task)


def _gen_junction(rng, spec: GeneratorSpec, name: str) -> WorldModel:
    """Four-way hub; one arm ends at the target, three are look-alike dead ends."""
    b = _Builder(rng, spec)
    res = b.res
    t = _cells(spec.wall, res)
    hub = _cells(1.6, res)
    width = _cells(1.4, res)
    arm_len = [_cells(float(rng.uniform(2.4, 2.8)), res) for _ in range(4)]
    reach = max(arm_len) + _cells(0.8, res)
    n = hub + 2 * reach + 2 * t
    g = b.new_floor(n, n)
    c = n // 2
    h0, h1 = c - hub // 2, c - hub // 2 + hub
    w0, w1 = c - width // 2, c - width // 2 + width
    b.carve(g, h0, h0, h1, h1)
    # arms: +x (east), +y (north), -x (west), -y (south)
    b.carve(g, w0, h1, w1, h1 + arm_len[0])
    b.carve(g, h1, w0, h1 + arm_len[1], w1)
    b.carve(g, w0, h0 - arm_len[2], w1, h0)
    b.carve(g, h0 - arm_len[3], w0, h0, w1)
    labels = list(OBJECT_LABELS)
    rng.shuffle(labels)
    goal_arm = int(rng.integers(4))
    obj_d = _cells(0.5, res)
    ow0, ow1 = c - _cells(0.3, res), c + _cells(0.3, res)
    objs = []
    for k in range(4):
        L = arm_len[k]
        if k == 0:
            box = (ow0, h1 + L - obj_d, ow1, h1 + L)
        elif k == 1:
            box = (h1 + L - obj_d, ow0, h1 + L, ow1)
        elif k == 2:
            box = (ow0, h0 - L, ow1, h0 - L + obj_d)
        else:
            box = (h0 - L, ow0, h0 - L + obj_d, ow1)
        objs.append(b.place_object(0, labels[k], *box))
    goal = objs[goal_arm]
    cx, cy = (c + 0.5) * res, (c + 0.5) * res
    start = Pose(cx, cy, 0.0, float(30 * int(rng.integers(12))), 0)
    task = _finish_task(b, spec, rng, start, goal, [goal])
    world = _world_from(b, spec, name, task)
    _check_reachable(world, task.goal_positions)
    return world


def _gen_aerial(rng, spec: GeneratorSpec, name: str) -> WorldModel:
    D, H, W = spec.aerial_shape
    occ = np.zeros((D, H, W), bool)
    lab = np.zeros((D, H, W), np.int32)
    labels = {1: "ground", 2: "building"}
    occ[0] = True
    lab[0] = 1
    start_xy = (4.5, 4.5)
    for _ in range(int(rng.integers(3, 6))):
        bw, bh = int(rng.integers(3, 7)), int(rng.integers(3, 7))
        x0, y0 = int(rng.integers(10, W - bw - 4)), int(rng.integers(10, H - bh - 4))
        top = int(rng.integers(6, D - 4))
        occ[1:top, y0 : y0 + bh, x0 : x0 + bw] = True
        lab[1:top, y0 : y0 + bh, x0 : x0 + bw] = 2
    color = str(rng.choice(COLORS))
    tlabel = f"{color} tower"
    labels[3] = tlabel
    tx, ty = int(rng.integers(W // 2, W - 6)), int(rng.integers(H // 2, H - 6))
    occ[1:12, ty : ty + 2, tx : tx + 2] = True
    lab[1:12, ty : ty + 2, tx : tx + 2] = 3
    goal = Site(tx + 1.0, ty - 2.5, 8.5, 0, tlabel)
    if occ[int(goal.z), int(goal.y), int(goal.x)]:
        raise _Retry("goal voxel blocked")
    start = Pose(start_xy[0], start_xy[1], 6.5, 45.0, 0)
    if occ[int(start.z), int(start.y), int(start.x)]:
        raise _Retry("start voxel blocked")
    v = np.array([goal.x - start.x, goal.y - start.y, goal.z - start.z])
    hint = tuple(float(x) for x in v / np.linalg.norm(v))
    bearing = (math.degrees(math.atan2(v[1], v[0])) + 360) % 360
    compass = ["east", "north-east", "north", "north-west", "west", "south-west", "south", "south-east"][
        int(((bearing + 22.5) % 360) // 45)]
    task = TaskSpec("AerialVLN", f"Fly {compass} and stop beside the {tlabel}.", start, [goal],
                    spec.success_radius or DEFAULT_RADIUS["AerialVLN"], target_label=tlabel, direction_hint=hint)
    world = WorldModel(name, 1.0, task, labels, variant=AERIAL, voxels=VoxelGrid(occ, lab))
    from .sim import geodesic_distance

    if not math.isfinite(geodesic_distance(world, start, (goal,))):
        raise _Retry("aerial goal unreachable")
    return world


# ---- fixture suites -----------------------------------------------------------


def oracle_suite() -> list[WorldModel]:
    """Twenty mixed worlds: single/multi floor, all families on the ground, one stair world or more."""
    specs = []
    for s in range(6):
        specs.append((100 + s, GeneratorSpec(family="ObjectNav")))
    for s in range(4):
        specs.append((200 + s, GeneratorSpec(family="VLN", n_subgoals=2)))
    for s in range(4):
        specs.append((300 + s, GeneratorSpec(family="EQA")))
    for s in range(3):
        specs.append((400 + s, GeneratorSpec(family="ObjectNav", floors=2, goal_floor=1, rooms_x=2, rooms_y=2)))
    for s in range(2):
        specs.append((500 + s, GeneratorSpec(family="ObjectNav", layout="single_room")))
    specs.append((600, GeneratorSpec(family="VLN", n_subgoals=2, dead_end_rooms=True)))
    return [generate_world(seed, spec, name=f"oracle_{i:02d}") for i, (seed, spec) in enumerate(specs)]


def dead_end_suite(n: int = 10) -> list[WorldModel]:
    spec = GeneratorSpec(family="ObjectNav", layout="junction")
    return [generate_world(700 + i, spec, name=f"deadend_{i:02d}") for i in range(n)]


def ordered_subgoal_suite(n: int = 10) -> list[WorldModel]:
    spec = GeneratorSpec(family="VLN", n_subgoals=3)
    return [generate_world(800 + i, spec, name=f"ordered_{i:02d}") for i in range(n)]


def aerial_suite(n: int = 20) -> list[WorldModel]:
    spec = GeneratorSpec(family="AerialVLN")
    return [generate_world(900 + i, spec, name=f"aerial_{i:02d}") for i in range(n)]
