"""Versioned JSON world files with run-length-encoded grids."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import SchemaMismatch
from ..geometry import Pose
from .model import AERIAL, GROUND, SemanticGrid2D, Site, StairLink, TaskSpec, VoxelGrid, WorldModel

FORMAT = "waynav-world"
VERSION = 1


def rle_encode(a: np.ndarray) -> list[list[int]]:
    flat = np.asarray(a).ravel()
    if flat.size == 0:
        return []
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change, [flat.size]))
    return [[int(flat[s]), int(e - s)] for s, e in zip(starts, ends)]


def rle_decode(runs, shape, dtype) -> np.ndarray:
    vals = np.array([r[0] for r in runs], dtype=np.int64)
    counts = np.array([r[1] for r in runs], dtype=np.int64)
    flat = np.repeat(vals, counts)
    if flat.size != int(np.prod(shape)):
        raise SchemaMismatch(f"run lengths cover {flat.size} cells, expected {int(np.prod(shape))}")
    return flat.astype(dtype).reshape(shape)


def _task_to_dict(t: TaskSpec) -> dict:
    return {
        "family": t.family,
        "instruction": t.instruction,
        "start": t.start.to_dict(),
        "goal_positions": [s.to_dict() for s in t.goal_positions],
        "success_radius": t.success_radius,
        "ordered_subgoal_positions": None if t.ordered_subgoal_positions is None
        else [s.to_dict() for s in t.ordered_subgoal_positions],
        "eqa_answer": t.eqa_answer,
        "target_label": t.target_label,
        "direction_hint": None if t.direction_hint is None else list(t.direction_hint),
    }


def _task_from_dict(d: dict) -> TaskSpec:
    subs = d.get("ordered_subgoal_positions")
    hint = d.get("direction_hint")
    return TaskSpec(
        family=d["family"],
        instruction=d["instruction"],
        start=Pose.from_dict(d["start"]),
        goal_positions=[Site.from_dict(s) for s in d["goal_positions"]],
        success_radius=d["success_radius"],
        ordered_subgoal_positions=None if subs is None else [Site.from_dict(s) for s in subs],
        eqa_answer=d.get("eqa_answer"),
        target_label=d.get("target_label", ""),
        direction_hint=None if hint is None else tuple(hint),
    )


def world_to_dict(w: WorldModel) -> dict:
    d = {
        "format": FORMAT,
        "version": VERSION,
        "name": w.name,
        "variant": w.variant,
        "resolution": w.resolution,
        "labels": {str(k): v for k, v in sorted(w.labels.items())},
        "task": _task_to_dict(w.task),
    }
    if w.variant == GROUND:
        d["floors"] = [
            {"height": g.height, "width": g.width,
             "occupancy_rle": rle_encode(g.occupied.astype(np.int8)),
             "labels_rle": rle_encode(g.labels)}
            for g in w.floors
        ]
        d["stair_links"] = [[l.floor_a, *l.cell_a, l.floor_b, *l.cell_b] for l in w.stair_links]
    else:
        v = w.voxels
        d["voxels"] = {"shape": list(v.occupied.shape),
                       "occupancy_rle": rle_encode(v.occupied.astype(np.int8)),
                       "labels_rle": rle_encode(v.labels)}
    return d


def world_from_dict(d: dict) -> WorldModel:
    if d.get("format") != FORMAT:
        raise SchemaMismatch(f"not a world file (format={d.get('format')!r})")
    if d.get("version") != VERSION:
        raise SchemaMismatch(f"unsupported world version {d.get('version')!r}")
    labels = {int(k): v for k, v in d["labels"].items()}
    task = _task_from_dict(d["task"])
    if d["variant"] == AERIAL:
        vd = d["voxels"]
        shape = tuple(vd["shape"])
        vox = VoxelGrid(rle_decode(vd["occupancy_rle"], shape, bool), rle_decode(vd["labels_rle"], shape, np.int32))
        return WorldModel(d["name"], d["resolution"], task, labels, variant=AERIAL, voxels=vox)
    floors = []
    for f in d["floors"]:
        shape = (f["height"], f["width"])
        floors.append(SemanticGrid2D(rle_decode(f["occupancy_rle"], shape, bool),
                                     rle_decode(f["labels_rle"], shape, np.int32)))
    links = [StairLink(a, (ra, ca), b, (rb, cb)) for a, ra, ca, b, rb, cb in d.get("stair_links", [])]
    return WorldModel(d["name"], d["resolution"], task, labels, variant=GROUND, floors=floors, stair_links=links)


def dumps(w: WorldModel) -> str:
    return json.dumps(world_to_dict(w), sort_keys=True, separators=(",", ":"))


def save_world(w: WorldModel, path) -> Path:
    path = Path(path)
    path.write_text(dumps(w))
    return path


def load_world(path) -> WorldModel:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise SchemaMismatch(f"{path}: {e}") from e
    return world_from_dict(d)
