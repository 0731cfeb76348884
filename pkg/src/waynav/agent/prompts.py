"""Deterministic prompt payloads built from versioned text templates."""

from __future__ import annotations

import base64
import io
import json
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from string import Template
from typing import Optional

import numpy as np
from PIL import Image

from ..geometry import Pose
from ..tdm import TodoList, render_text
from ..world.model import DIRECTIONS, PanoramaObservation, TaskSpec, View

HISTORY_CAPTIONS = 20
HISTORY_VIEWS = 8
STRUCTURAL_LABELS = frozenset({"wall", "ground"})


@lru_cache(maxsize=None)
def template(name: str) -> str:
    return resources.files("waynav.agent").joinpath("templates", f"{name}.txt").read_text()


@dataclass(frozen=True)
class EncodedImage:
    name: str
    png: bytes


@dataclass(frozen=True)
class PromptPayload:
    text_blocks: tuple[str, ...]
    images: tuple[EncodedImage, ...] = ()
    metadata: dict = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return self.metadata.get("kind", "")

    @property
    def text(self) -> str:
        return "\n\n".join(self.text_blocks)

    def to_wire(self, role: str) -> dict:
        return {
            "role": role,
            "text_blocks": list(self.text_blocks),
            "images": [base64.b64encode(im.png).decode("ascii") for im in self.images],
            "metadata": self.metadata,
        }


@dataclass
class History:
    """Captions of visited waypoints plus references to keyed views, oldest first."""

    captions: list[str] = field(default_factory=list)
    view_keys: list[str] = field(default_factory=list)

    def add(self, caption: str, view_key: Optional[str] = None):
        self.captions.append(caption)
        if view_key:
            self.view_keys.append(view_key)

    def render(self) -> str:
        caps = self.captions[-HISTORY_CAPTIONS:]
        keys = self.view_keys[-HISTORY_VIEWS:]
        lines = ["History of visited waypoints:"]
        lines += [f"  {c}" for c in caps] or ["  (none yet)"]
        if keys:
            lines.append("Key observations: " + ", ".join(keys))
        return "\n".join(lines)


def encode_depth_png(depth: np.ndarray, max_range: float) -> bytes:
    """Grayscale depth map: 0 m is black, max_range and no-return are white."""
    d = np.where(np.isfinite(depth), depth, max_range)
    g = np.round(np.clip(d / max_range, 0.0, 1.0) * 255.0).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(g, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> np.ndarray:
    return np.asarray(Image.open(io.BytesIO(data)))


def label_spans(view: View, labels: dict[int, str]) -> list[tuple[str, int, int]]:
    """Contiguous column runs per visible object label, ordered by first column then name."""
    present = {}
    for lid in np.unique(view.semantic):
        name = labels.get(int(lid), "")
        if lid == 0 or not name or name in STRUCTURAL_LABELS:
            continue
        cols = np.flatnonzero((view.semantic == lid).any(axis=0))
        runs = np.split(cols, np.flatnonzero(np.diff(cols) > 1) + 1)
        present[name] = [(int(r[0]), int(r[-1])) for r in runs if r.size]
    out = [(name, a, b) for name, rs in present.items() for a, b in rs]
    return sorted(out, key=lambda t: (t[1], t[0]))


def describe_view(name: str, view: View, labels: dict[int, str]) -> str:
    spans = label_spans(view, labels)
    if not spans:
        return f"{name} view: no labelled objects"
    return f"{name} view: " + ", ".join(f"{n} cols {a}-{b}" for n, a, b in spans)


def _pose_line(pose: Pose) -> str:
    return f"Robot pose: x={pose.x:.2f} y={pose.y:.2f} z={pose.z:.2f} yaw={pose.yaw:.0f} floor={pose.floor_id}"


def _pose_meta(pose: Pose) -> dict:
    return {"x": round(pose.x, 6), "y": round(pose.y, 6), "z": round(pose.z, 6),
            "yaw": round(pose.yaw, 6), "floor_id": pose.floor_id}


def _view_names(panorama: PanoramaObservation) -> list[str]:
    return [n for n in (*DIRECTIONS, "down") if n in panorama.views]


def _panorama_blocks(panorama: PanoramaObservation, labels, prefix: str = ""):
    names = _view_names(panorama)
    images = tuple(EncodedImage(f"{prefix}{n}", encode_depth_png(panorama.views[n].depth, panorama.views[n].max_range))
                   for n in names)
    text = "\n".join([f"Images {', '.join(prefix + n for n in names)} (in that order)."] +
                     [describe_view(prefix + n, panorama.views[n], labels) for n in names])
    return text, images


def build_lang_prompt(task: TaskSpec, panorama: PanoramaObservation, history: History, todo: Optional[TodoList],
                      labels: dict[int, str], step: int = 0, aerial: bool = False) -> PromptPayload:
    rules = template("lang_todo_rules") if todo is not None else ""
    system = Template(template("aerial_system" if aerial else "lang_system")).substitute(todo_rules=rules.rstrip("\n"))
    blocks = [system.rstrip("\n"), f"Task: {task.instruction}", _pose_line(panorama.pose)]
    if todo is not None:
        blocks.append(render_text(todo))
    blocks.append(history.render())
    view_text, images = _panorama_blocks(panorama, labels)
    blocks.append(view_text)
    blocks.append(template("lang_output" if todo is not None else "lang_output_notodo").rstrip("\n"))
    meta = {"kind": "decide", "family": task.family, "step": step, "pose": _pose_meta(panorama.pose)}
    return PromptPayload(tuple(blocks), images, meta)


def build_recovery_prompt(task: TaskSpec, waypoint_panorama: PanoramaObservation, failed_dir: str,
                          failed_frames: list[tuple[str, View]], labels: dict[int, str], history: History,
                          todo: Optional[TodoList], step: int = 0, aerial: bool = False) -> PromptPayload:
    base = build_lang_prompt(task, waypoint_panorama, history, todo, labels, step, aerial)
    frame_keys = [k for k, _ in failed_frames]
    evidence = "\n".join([
        template("recover").rstrip("\n"),
        f"Failed direction: {failed_dir}",
        f"Failed route frames, oldest first: {', '.join(frame_keys) if frame_keys else '(none)'}",
    ])
    frames_text = "\n".join([describe_view(k, v, labels) for k, v in failed_frames])
    frame_images = tuple(EncodedImage(k, encode_depth_png(v.depth, v.max_range)) for k, v in failed_frames)
    blocks = list(base.text_blocks)
    blocks.insert(1, evidence)
    blocks.insert(-1, "Failed route frames:\n" + (frames_text or "(none)"))
    meta = dict(base.metadata, kind="recover", failed_direction=failed_dir)
    return PromptPayload(tuple(blocks), base.images + frame_images, meta)


def build_vis_prompt(task: TaskSpec, direction: str, view: View, progress: str, labels: dict[int, str],
                     pose: Pose, step: int = 0) -> PromptPayload:
    blocks = (
        Template(template("vis")).substitute(direction=direction).rstrip("\n"),
        f"Task: {task.instruction}",
        f"Navigator notes: {progress}" if progress else "Navigator notes: (none)",
        f"Image {direction} ({view.intrinsics.width}x{view.intrinsics.height} pixels).",
        describe_view(direction, view, labels),
    )
    meta = {"kind": "vis", "family": task.family, "step": step, "pose": _pose_meta(pose), "direction": direction}
    return PromptPayload(blocks, (EncodedImage(direction, encode_depth_png(view.depth, view.max_range)),), meta)


def build_verify_prompt(task: TaskSpec, panorama: PanoramaObservation, labels: dict[int, str],
                        answer: Optional[str], todo: Optional[TodoList] = None, step: int = 0) -> PromptPayload:
    view_text, images = _panorama_blocks(panorama, labels)
    blocks = [template("verify").rstrip("\n"), f"Task: {task.instruction}", _pose_line(panorama.pose)]
    if todo is not None:
        blocks.append(render_text(todo))
    if answer is not None:
        blocks.append(f"Proposed answer: {answer}")
    blocks.append(view_text)
    meta = {"kind": "verify", "family": task.family, "step": step, "pose": _pose_meta(panorama.pose)}
    return PromptPayload(tuple(blocks), images, meta)


def build_init_prompt(task: TaskSpec, panorama: PanoramaObservation, labels: dict[int, str]) -> PromptPayload:
    view_text, images = _panorama_blocks(panorama, labels)
    blocks = (template("init").rstrip("\n"), f"Task: {task.instruction}", view_text)
    meta = {"kind": "init", "family": task.family, "step": 0, "pose": _pose_meta(panorama.pose)}
    return PromptPayload(blocks, images, meta)


# ---- leakage audit -------------------------------------------------------------------

ALLOWED_META = frozenset({"kind", "family", "step", "pose", "direction", "failed_direction"})
FORBIDDEN_TOKENS = ("goal_positions", "ordered_subgoal", "eqa_answer", "semantic", "success_radius")


def _coord_pattern(x: float, y: float) -> re.Pattern:
    return re.compile(rf"{x:.2f}\D{{1,12}}{y:.2f}")


def audit_payload(payload: PromptPayload, world) -> list[str]:
    """Ground-truth leaks found in a serialized payload; empty means clean."""
    task = world.task
    wire = json.dumps(payload.to_wire("audit"), sort_keys=True)
    leaks = []
    for tok in FORBIDDEN_TOKENS:
        if tok in wire:
            leaks.append(f"field name {tok!r}")
    extra = set(payload.metadata) - ALLOWED_META
    if extra:
        leaks.append(f"metadata keys {sorted(extra)}")
    sites = list(task.goal_positions) + list(task.ordered_subgoal_positions or [])
    # the agent's own odometry is not ground truth, even when it sits on a goal
    meta = {k: v for k, v in payload.metadata.items() if k != "pose"}
    text = "\n".join(l for l in payload.text.split("\n") if not l.startswith("Robot pose:")) + json.dumps(meta)
    for s in sites:
        if _coord_pattern(s.x, s.y).search(text):
            leaks.append(f"goal coordinates ({s.x:.2f}, {s.y:.2f})")
    if task.eqa_answer:
        visible = task.instruction + " " + " ".join(world.labels.values())
        pat = re.compile(rf"\b{re.escape(task.eqa_answer)}\b", re.I)
        # the backend's own proposed answer is echoed back for verification
        own = "\n".join(b for b in payload.text_blocks if not b.startswith("Proposed answer:"))
        if pat.search(own) and not pat.search(visible):
            leaks.append("EQA answer text")
    for im in payload.images:
        arr = decode_png(im.png)
        if arr.ndim != 2 or arr.dtype != np.uint8:
            leaks.append(f"image {im.name} is not 8-bit grayscale depth")
    return leaks
