"""Ordered sub-goal checklist with batch update operations.

Indices in an op batch are 1-based positions in the list as it was before
the batch. A batch never raises: every rejected op produces a warning and
leaves the list untouched for that op.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from typing import Optional, Union

from .errors import EmptyPlan

log = logging.getLogger(__name__)

PENDING = "pending"
COMPLETED = "completed"
STATUSES = (PENDING, COMPLETED)

HEADER = "TODO list (revision {rev}):"


@dataclass(frozen=True)
class TodoItem:
    content: str
    status: str = PENDING
    result: str = ""

    def to_dict(self) -> dict:
        return {"content": self.content, "status": self.status, "result": self.result}


@dataclass(frozen=True)
class TodoList:
    items: tuple[TodoItem, ...] = ()
    revision: int = 0

    def __len__(self):
        return len(self.items)

    def completed_indices(self) -> list[int]:
        return [i + 1 for i, it in enumerate(self.items) if it.status == COMPLETED]

    def to_dict(self) -> dict:
        return {"revision": self.revision, "items": [it.to_dict() for it in self.items]}

    @classmethod
    def from_dict(cls, d: dict) -> "TodoList":
        return cls(tuple(TodoItem(i["content"], i["status"], i["result"]) for i in d["items"]), d["revision"])


@dataclass(frozen=True)
class Update:
    index: int
    status: str
    result: str = ""


@dataclass(frozen=True)
class Rewrite:
    index: int
    content: str


@dataclass(frozen=True)
class Add:
    content: str
    index: Optional[int] = None


@dataclass(frozen=True)
class Remove:
    index: int


TodoUpdateOp = Union[Update, Rewrite, Add, Remove]


def op_to_dict(op: TodoUpdateOp) -> dict:
    if isinstance(op, Update):
        return {"op": "update", "index": op.index, "status": op.status, "result": op.result}
    if isinstance(op, Rewrite):
        return {"op": "rewrite", "index": op.index, "content": op.content}
    if isinstance(op, Add):
        d = {"op": "add", "content": op.content}
        if op.index is not None:
            d["index"] = op.index
        return d
    if isinstance(op, Remove):
        return {"op": "remove", "index": op.index}
    raise TypeError(op)


def init_list(subgoal_texts: list[str]) -> TodoList:
    texts = [t.strip() for t in subgoal_texts if t and t.strip()]
    if not texts:
        raise EmptyPlan("no sub-goals to track")
    return TodoList(tuple(TodoItem(t) for t in texts), 0)


@dataclass
class _Slot:
    item: TodoItem
    origin: Optional[int]  # pre-batch 1-based index, None for items added in this batch
    removed: bool = False


def apply(todo: TodoList, ops: list[TodoUpdateOp]) -> tuple[TodoList, list[str]]:
    n = len(todo.items)
    slots = [_Slot(it, i + 1) for i, it in enumerate(todo.items)]
    inserts: dict[int, list[_Slot]] = {}  # keyed by pre-batch index the new items precede
    appended: list[_Slot] = []
    warnings: list[str] = []

    def slot(i, what) -> Optional[_Slot]:
        if not isinstance(i, int) or isinstance(i, bool) or not 1 <= i <= n:
            warnings.append(f"{what}: index {i!r} out of range 1..{n}; skipped")
            return None
        s = slots[i - 1]
        if s.removed:
            warnings.append(f"{what}: item {i} was removed earlier in this batch; skipped")
            return None
        return s

    for op in ops:
        if isinstance(op, Update):
            s = slot(op.index, "update")
            if s is None:
                continue
            if op.status not in STATUSES:
                warnings.append(f"update: unknown status {op.status!r} for item {op.index}; skipped")
                continue
            result = (op.result or "").strip()
            if op.status == COMPLETED and not result:
                warnings.append(f"update: item {op.index} marked completed without a result; rolled back")
                continue
            s.item = TodoItem(s.item.content, op.status, result)
        elif isinstance(op, Rewrite):
            s = slot(op.index, "rewrite")
            if s is None:
                continue
            content = (op.content or "").strip()
            if not content:
                warnings.append(f"rewrite: empty content for item {op.index}; skipped")
                continue
            if s.item.status == COMPLETED:
                warnings.append(f"rewrite: item {op.index} is already completed; skipped")
                continue
            s.item = TodoItem(content, s.item.status, s.item.result)
        elif isinstance(op, Add):
            content = (op.content or "").strip()
            if not content:
                warnings.append("add: empty content; skipped")
                continue
            new = _Slot(TodoItem(content), None)
            if op.index is None or op.index == n + 1:
                appended.append(new)
            elif isinstance(op.index, int) and not isinstance(op.index, bool) and 1 <= op.index <= n:
                inserts.setdefault(op.index, []).append(new)
            else:
                warnings.append(f"add: index {op.index!r} out of range 1..{n + 1}; skipped")
        elif isinstance(op, Remove):
            s = slot(op.index, "remove")
            if s is None:
                continue
            if s.item.status == COMPLETED:
                log.warning("removing completed item %d (%r)", op.index, s.item.content)
            s.removed = True
        else:
            warnings.append(f"unknown op {op!r}; skipped")

    out: list[TodoItem] = []
    for s in slots:
        out.extend(x.item for x in inserts.get(s.origin, []))
        if not s.removed:
            out.append(s.item)
    out.extend(x.item for x in appended)
    return TodoList(tuple(out), todo.revision + 1), warnings


def render_text(todo: TodoList) -> str:
    """Compact checklist text. Strings are JSON-quoted so distinct lists never render alike."""
    lines = [HEADER.format(rev=todo.revision)]
    for i, it in enumerate(todo.items, 1):
        glyph = "x" if it.status == COMPLETED else " "
        line = f"{i}. [{glyph}] {json.dumps(it.content)}"
        if it.result:
            line += f" -> {json.dumps(it.result)}"
        lines.append(line)
    return "\n".join(lines)


_HEADER_RE = re.compile(r"^TODO list \(revision (\d+)\):$")
_LINE_RE = re.compile(r'^(\d+)\. \[( |x)\] ("(?:[^"\\]|\\.)*")(?: -> ("(?:[^"\\]|\\.)*"))?$')


def parse_text(text: str) -> TodoList:
    """Inverse of :func:`render_text`."""
    lines = text.strip("\n").split("\n")
    m = _HEADER_RE.match(lines[0])
    if not m:
        raise ValueError(f"not a rendered checklist: {lines[0]!r}")
    items = []
    for k, line in enumerate(lines[1:], 1):
        lm = _LINE_RE.match(line)
        if not lm or int(lm.group(1)) != k:
            raise ValueError(f"bad checklist line {line!r}")
        status = COMPLETED if lm.group(2) == "x" else PENDING
        result = json.loads(lm.group(4)) if lm.group(4) else ""
        items.append(TodoItem(json.loads(lm.group(3)), status, result))
    return TodoList(tuple(items), int(m.group(1)))


def find_rendered(text: str) -> Optional[TodoList]:
    """Locate and parse a rendered checklist embedded in a larger prompt text."""
    idx = text.find("TODO list (revision ")
    if idx < 0:
        return None
    block = []
    for i, line in enumerate(text[idx:].split("\n")):
        if i > 0 and not _LINE_RE.match(line):
            break
        block.append(line)
    return parse_text("\n".join(block))
