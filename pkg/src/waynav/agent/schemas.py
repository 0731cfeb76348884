"""Structured decision records and the fault-tolerant parser for backend text."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Optional, Union

from ..errors import UnparseableDecision
from ..tdm import Add, Remove, Rewrite, TodoUpdateOp, Update, op_to_dict
from ..world.model import DIRECTIONS

STAIR_DIRECTIONS = ("up", "down")


@dataclass(frozen=True)
class Turn:
    direction: str

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ValueError(f"bad direction {self.direction!r}")


@dataclass(frozen=True)
class Backtrack:
    waypoint_id: int


@dataclass(frozen=True)
class GoStair:
    direction: str

    def __post_init__(self):
        if self.direction not in STAIR_DIRECTIONS:
            raise ValueError(f"bad stair direction {self.direction!r}")


@dataclass(frozen=True)
class DoubleCheck:
    answer: Optional[str] = None


LangAction = Union[Turn, Backtrack, GoStair, DoubleCheck]


def action_to_dict(a: LangAction) -> dict:
    if isinstance(a, Turn):
        return {"name": "turn", "direction": a.direction}
    if isinstance(a, Backtrack):
        return {"name": "backtrack", "waypoint_id": a.waypoint_id}
    if isinstance(a, GoStair):
        return {"name": "go_stair", "direction": a.direction}
    if isinstance(a, DoubleCheck):
        d = {"name": "double_check", "target": "stop"}
        if a.answer is not None:
            d["answer"] = a.answer
        return d
    raise TypeError(a)


@dataclass(frozen=True)
class LangDecision:
    action: LangAction
    progress_analysis: str = ""
    reasoning_todo: str = ""
    reasoning_action: str = ""
    todo_ops: tuple[TodoUpdateOp, ...] = ()
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def to_dict(self) -> dict:
        return {
            "progress_analysis": self.progress_analysis,
            "reasoning_todo": self.reasoning_todo,
            "todo_ops": [op_to_dict(o) for o in self.todo_ops],
            "reasoning_action": self.reasoning_action,
            "action": action_to_dict(self.action),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass(frozen=True)
class BBox:
    u_min: int
    v_min: int
    u_max: int
    v_max: int

    @property
    def center(self) -> tuple[int, int]:
        return ((self.u_min + self.u_max) // 2, (self.v_min + self.v_max) // 2)

    def to_list(self) -> list[int]:
        return [self.u_min, self.v_min, self.u_max, self.v_max]


@dataclass(frozen=True)
class Point:
    u: int
    v: int

    @property
    def center(self) -> tuple[int, int]:
        return (self.u, self.v)

    def to_list(self) -> list[int]:
        return [self.u, self.v]


@dataclass(frozen=True)
class VisDecision:
    select: Optional[Union[BBox, Point]]  # None: the backend found nothing worth targeting
    target_desc: str = ""
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def to_dict(self) -> dict:
        return {"select": None if self.select is None else self.select.to_list(), "target_desc": self.target_desc}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass(frozen=True)
class Verification:
    confirm: bool
    reasoning: str = ""

    def to_json(self) -> str:
        return json.dumps({"confirm": "yes" if self.confirm else "no", "reasoning": self.reasoning})


# ---- recovery ladder ------------------------------------------------------------

_FENCE = re.compile(r"```[a-zA-Z0-9_-]*[ \t]*\n?(.*?)```", re.S)


def _first_balanced(text: str) -> Optional[str]:
    start = text.find("{")
    while start >= 0:
        depth = 0
        in_str = esc = False
        for i in range(start, len(text)):
            ch = text[i]
            if in_str:
                if esc:
                    esc = False
                elif ch == "\\":
                    esc = True
                elif ch == '"':
                    in_str = False
            elif ch == '"':
                in_str = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    return text[start : i + 1]
        start = text.find("{", start + 1)
    return None


def _loads_obj(text: str) -> Optional[dict]:
    try:
        v = json.loads(text)
    except (json.JSONDecodeError, ValueError):
        return None
    return v if isinstance(v, dict) else None


def strip_fences(raw: str) -> str:
    m = _FENCE.search(raw)
    if m:
        return m.group(1)
    return raw.replace("```", "")


def extract_object(raw: str) -> dict:
    """Strict JSON, then fence-stripped JSON, then the first balanced ``{...}``."""
    if not isinstance(raw, str):
        raise UnparseableDecision(f"expected text, got {type(raw).__name__}")
    obj = _loads_obj(raw)
    if obj is not None:
        return obj
    cleaned = strip_fences(raw)
    obj = _loads_obj(cleaned)
    if obj is not None:
        return obj
    for text in (cleaned, raw):
        sub = _first_balanced(text)
        if sub is not None:
            obj = _loads_obj(sub)
            if obj is not None:
                return obj
    raise UnparseableDecision(f"no JSON object in response: {raw[:80]!r}")


# ---- language decisions -----------------------------------------------------------

_FIELD_ALIASES = {
    "action_reasoning": "reasoning_action",
    "todo_reasoning": "reasoning_todo",
    "progress": "progress_analysis",
    "todo_updates": "todo_ops",
    "todo": "todo_ops",
    "tool_call": "action",
}
_DIR_ALIASES = {"forward": "front", "ahead": "front", "straight": "front", "backward": "back", "behind": "back"}
_CALL = re.compile(r"^\s*([a-z_]+)\s*\(\s*(.*?)\s*\)\s*$")


def _norm_keys(d: dict, aliases: dict) -> dict:
    out = {}
    for k, v in d.items():
        k2 = aliases.get(k, k)
        if k2 not in out or k2 == k:
            out[k2] = v
    return out


def _int(v) -> int:
    if isinstance(v, bool):
        raise ValueError("boolean is not an index")
    if isinstance(v, float) and v.is_integer():
        return int(v)
    if isinstance(v, str) and v.strip().lstrip("-").isdigit():
        return int(v.strip())
    if isinstance(v, int):
        return v
    raise ValueError(f"not an integer: {v!r}")


def parse_action(a) -> LangAction:
    if isinstance(a, str):
        m = _CALL.match(a.strip().lower())
        if not m:
            raise ValueError(f"unrecognised action {a!r}")
        name, arg = m.group(1), m.group(2).strip("'\" ")
        a = {"name": name, "arg": arg}
    if not isinstance(a, dict):
        raise ValueError(f"unrecognised action {a!r}")
    a = dict(a)
    if "args" in a and isinstance(a["args"], dict):
        a.update(a.pop("args"))
    name = str(a.get("name", a.get("tool", a.get("type", "")))).strip().lower()
    arg = a.get("arg")
    if name == "turn":
        d = str(a.get("direction", arg or "")).strip().lower()
        return Turn(_DIR_ALIASES.get(d, d))
    if name == "backtrack":
        return Backtrack(_int(a.get("waypoint_id", a.get("waypoint", arg))))
    if name in ("go_stair", "gostair", "stair"):
        return GoStair(str(a.get("direction", arg or "")).strip().lower())
    if name in ("double_check", "doublecheck", "stop"):
        ans = a.get("answer")
        return DoubleCheck(None if ans is None else str(ans))
    raise ValueError(f"unknown action name {name!r}")


def parse_todo_op(d) -> TodoUpdateOp:
    if not isinstance(d, dict):
        raise ValueError(f"todo op must be an object, got {d!r}")
    d = _norm_keys(d, {"i": "index", "position": "index", "text": "content", "evidence": "result", "type": "op"})
    kind = str(d.get("op", "")).strip().lower()
    if kind == "update":
        return Update(_int(d.get("index")), str(d.get("status", "")).strip().lower(), str(d.get("result") or ""))
    if kind == "rewrite":
        return Rewrite(_int(d.get("index")), str(d.get("content") or ""))
    if kind == "add":
        idx = d.get("index")
        return Add(str(d.get("content") or ""), None if idx is None else _int(idx))
    if kind == "remove":
        return Remove(_int(d.get("index")))
    raise ValueError(f"unknown todo op {kind!r}")


def parse_lang_response(raw: str) -> LangDecision:
    obj = _norm_keys(extract_object(raw), _FIELD_ALIASES)
    if "action" not in obj:
        raise UnparseableDecision("decision has no action")
    try:
        action = parse_action(obj["action"])
    except ValueError as e:
        raise UnparseableDecision(str(e)) from e
    warnings = []
    ops = []
    raw_ops = obj.get("todo_ops") or []
    if not isinstance(raw_ops, list):
        warnings.append("todo_ops is not a list; ignored")
        raw_ops = []
    for o in raw_ops:
        try:
            ops.append(parse_todo_op(o))
        except ValueError as e:
            warnings.append(f"dropped todo op: {e}")
    return LangDecision(
        action=action,
        progress_analysis=str(obj.get("progress_analysis") or ""),
        reasoning_todo=str(obj.get("reasoning_todo") or ""),
        reasoning_action=str(obj.get("reasoning_action") or ""),
        todo_ops=tuple(ops),
        warnings=tuple(warnings),
    )


# ---- vision decisions ------------------------------------------------------------------


def _clamp(v: float, lo: int, hi: int) -> int:
    return int(min(max(round(v), lo), hi))


def parse_vis_response(raw: str, width: int = 128, height: int = 96) -> VisDecision:
    obj = extract_object(raw)
    desc = str(obj.get("target_desc") or obj.get("description") or "")
    sel = obj.get("select", obj.get("bbox", obj.get("point")))
    if sel is None:
        return VisDecision(None, desc)
    if isinstance(sel, dict):
        for key in ("bbox", "box", "point"):
            if key in sel:
                sel = sel[key]
                break
        else:
            sel = [sel.get(k) for k in ("u_min", "v_min", "u_max", "v_max")] if "u_min" in sel else \
                [sel.get("u"), sel.get("v")]
    try:
        vals = [float(v) for v in sel]
    except (TypeError, ValueError) as e:
        raise UnparseableDecision(f"bad select {sel!r}") from e
    if len(vals) not in (2, 4) or not all(v == v and abs(v) != float("inf") for v in vals):
        raise UnparseableDecision(f"select must hold 2 or 4 finite numbers, got {sel!r}")
    warnings = []
    if len(vals) == 2:
        vals = vals + vals
    u0, v0, u1, v1 = vals
    if u0 > u1 or v0 > v1:
        warnings.append("box corners swapped")
        u0, u1 = min(u0, u1), max(u0, u1)
        v0, v1 = min(v0, v1), max(v0, v1)
    cl = [_clamp(u0, 0, width - 1), _clamp(v0, 0, height - 1), _clamp(u1, 0, width - 1), _clamp(v1, 0, height - 1)]
    if cl != [round(x) for x in (u0, v0, u1, v1)]:
        warnings.append(f"selection {sel!r} clamped to image {width}x{height}")
    u0, v0, u1, v1 = cl
    if u0 == u1 or v0 == v1:
        return VisDecision(Point((u0 + u1) // 2, (v0 + v1) // 2), desc, tuple(warnings))
    return VisDecision(BBox(u0, v0, u1, v1), desc, tuple(warnings))


def parse_verification(raw: str) -> Verification:
    obj = extract_object(raw)
    c = obj.get("confirm", obj.get("confirmed", obj.get("answer")))
    if isinstance(c, bool):
        ok = c
    elif isinstance(c, str) and c.strip().lower() in ("yes", "y", "true", "confirm", "confirmed"):
        ok = True
    elif isinstance(c, str) and c.strip().lower() in ("no", "n", "false"):
        ok = False
    else:
        raise UnparseableDecision(f"verification needs confirm yes/no, got {c!r}")
    return Verification(ok, str(obj.get("reasoning") or ""))


def parse_subgoals(raw: str) -> list[str]:
    try:
        obj = extract_object(raw)
        items = obj.get("subgoals", obj.get("todo", obj.get("items")))
    except UnparseableDecision:
        m = re.search(r"\[.*\]", raw, re.S)
        if not m:
            raise
        try:
            items = json.loads(m.group(0))
        except json.JSONDecodeError as e:
            raise UnparseableDecision("no sub-goal list") from e
    if not isinstance(items, list):
        raise UnparseableDecision("sub-goals must be a list")
    out = []
    for it in items:
        if isinstance(it, dict):
            it = it.get("content", "")
        if str(it).strip():
            out.append(str(it).strip())
    if not out:
        raise UnparseableDecision("empty sub-goal list")
    return out
