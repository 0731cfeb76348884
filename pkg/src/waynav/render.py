"""Plan-view SVG of one episode: walls, executed path, waypoints, backtrack arcs and goal rings.

Output is a pure function of the trace and world, so identical inputs give identical bytes.
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

from .errors import SchemaMismatch
from .world.model import WorldModel

SCALE = 40.0  # px per metre
MARGIN = 20.0
GAP = 30.0  # between floor panels


def _rects(occ: np.ndarray) -> list[tuple[int, int, int, int]]:
    """Cover a boolean mask with axis-aligned rectangles (row, col, height, width).

    Runs are found per row and stacked downward while the next row repeats the same run.
    """
    out = []
    open_runs: dict[tuple[int, int], int] = {}  # (c0, c1) -> start row
    h, _ = occ.shape
    for r in range(h + 1):
        runs = set()
        if r < h:
            row = np.concatenate(([False], occ[r], [False])).astype(np.int8)
            d = np.flatnonzero(np.diff(row))
            runs = {(int(a), int(b)) for a, b in zip(d[::2], d[1::2])}
        for run in sorted(set(open_runs) - runs):
            r0 = open_runs.pop(run)
            out.append((r0, run[0], r - r0, run[1] - run[0]))
        for run in sorted(runs - set(open_runs)):
            open_runs[run] = r
    return sorted(out)


def _f(v: float) -> str:
    s = f"{v:.2f}".rstrip("0").rstrip(".")
    return "0" if s == "-0" else s


def _footprints(world: WorldModel) -> list[np.ndarray]:
    if world.is_aerial:
        return [world.voxels.occupied.any(axis=0)]
    return [f.occupied for f in world.floors]


def render_svg(trace, world: WorldModel) -> str:
    """SVG text for a trace/world pair; a name mismatch raises SchemaMismatch."""
    head = next((r for r in trace.records if r.get("type") == "episode"), None)
    if head is None:
        raise SchemaMismatch("trace has no episode record")
    if head.get("world") != world.name:
        raise SchemaMismatch(f"trace is for world {head.get('world')!r}, not {world.name!r}")

    res = world.resolution
    maps = _footprints(world)
    h_m = max(m.shape[0] for m in maps) * res
    w_m = max(m.shape[1] for m in maps) * res
    panel_w = w_m * SCALE
    panel_h = h_m * SCALE
    n = len(maps)
    total_w = 2 * MARGIN + n * panel_w + (n - 1) * GAP
    total_h = 2 * MARGIN + panel_h + 16

    def panel_of(pose) -> int:
        return 0 if world.is_aerial else int(pose.get("floor_id", 0))

    def xy(p: dict, panel: int | None = None) -> tuple[float, float]:
        k = panel_of(p) if panel is None else panel
        x0 = MARGIN + k * (panel_w + GAP)
        return x0 + p["x"] * SCALE, MARGIN + 16 + (h_m - p["y"]) * SCALE

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(total_w)}" height="{_f(total_h)}" '
        f'viewBox="0 0 {_f(total_w)} {_f(total_h)}">',
        f'<title>{escape(world.name)} seed {int(head.get("seed", 0))}</title>',
        f'<rect x="0" y="0" width="{_f(total_w)}" height="{_f(total_h)}" fill="white"/>',
    ]

    for k, occ in enumerate(maps):
        x0 = MARGIN + k * (panel_w + GAP)
        y0 = MARGIN + 16
        label = "plan" if world.is_aerial else f"floor {k}"
        parts.append(f'<text x="{_f(x0)}" y="{_f(MARGIN + 10)}" font-size="12" font-family="sans-serif">'
                     f'{label}</text>')
        parts.append('<g class="walls" fill="#444">')
        for r, c, hh, ww in _rects(occ):
            # row r covers y in [r*res, (r+1)*res); svg y grows downward
            top = y0 + (h_m - (r + hh) * res) * SCALE
            parts.append(f'<rect x="{_f(x0 + c * res * SCALE)}" y="{_f(top)}" '
                         f'width="{_f(ww * res * SCALE)}" height="{_f(hh * res * SCALE)}"/>')
        parts.append("</g>")

    radius = float(head.get("success_radius") or world.task.success_radius)
    parts.append('<g class="goals" fill="none" stroke="#2a9d2a" stroke-width="2">')
    for s in world.task.goal_positions:
        site = {"x": s.x, "y": s.y, "floor_id": s.floor_id}
        cx, cy = xy(site)
        parts.append(f'<circle class="goal-ring" cx="{_f(cx)}" cy="{_f(cy)}" r="{_f(radius * SCALE)}"/>')
        parts.append(f'<circle cx="{_f(cx)}" cy="{_f(cy)}" r="3" fill="#2a9d2a"/>')
    parts.append("</g>")

    # executed path, split wherever the floor changes
    poses = [head["start"]] + [r["pose"] for r in trace.records if r.get("type") == "step"]
    segments: list[list[dict]] = []
    for p in poses:
        if segments and panel_of(segments[-1][-1]) == panel_of(p):
            segments[-1].append(p)
        else:
            segments.append([p])
    parts.append('<g class="path" fill="none" stroke="#1f5fbf" stroke-width="2" stroke-linejoin="round">')
    for seg in segments:
        pts = " ".join(f"{_f(a)},{_f(b)}" for a, b in (xy(p) for p in seg))
        parts.append(f'<polyline points="{pts}"/>')
    parts.append("</g>")
    sx, sy = xy(head["start"])
    parts.append(f'<rect class="start" x="{_f(sx - 4)}" y="{_f(sy - 4)}" width="8" height="8" fill="#1f5fbf"/>')
    final_pose = trace.final.get("final_pose") if trace.final else None
    if final_pose:
        fx, fy = xy(final_pose)
        parts.append(f'<circle class="end" cx="{_f(fx)}" cy="{_f(fy)}" r="4" fill="#d62828"/>')

    waypoints: dict[int, dict] = {}
    parts.append('<g class="waypoints" fill="#f4a261" stroke="black" stroke-width="0.5" font-size="9" '
                 'font-family="sans-serif">')
    for r in trace.records:
        if r.get("type") == "waypoint":
            waypoints[int(r["id"])] = r["pose"]
            cx, cy = xy(r["pose"])
            parts.append(f'<circle cx="{_f(cx)}" cy="{_f(cy)}" r="3.5"/>'
                         f'<text x="{_f(cx + 5)}" y="{_f(cy - 5)}" stroke="none" fill="black">{int(r["id"])}</text>')
    parts.append("</g>")

    parts.append('<g class="backtracks" fill="none" stroke="#9b2226" stroke-width="1.5" stroke-dasharray="5,3">')
    for r in trace.records:
        if r.get("type") == "backtrack" and r.get("status") != "skipped" and int(r["target"]) in waypoints:
            src = r["origin"]
            a = xy(src)
            b = xy(waypoints[int(r["target"])], panel_of(src))
            mx, my = (a[0] + b[0]) / 2, (a[1] + b[1]) / 2
            dx, dy = b[0] - a[0], b[1] - a[1]
            ctrl = (mx - dy * 0.3, my + dx * 0.3)
            parts.append(f'<path class="backtrack" d="M {_f(a[0])} {_f(a[1])} Q {_f(ctrl[0])} {_f(ctrl[1])} '
                         f'{_f(b[0])} {_f(b[1])}"/>')
    parts.append("</g>")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def path_end_inside_ring(trace, world: WorldModel) -> bool:
    """Whether the final pose lies within the drawn goal ring of some goal on the same floor."""
    end = trace.final["final_pose"]
    radius = float(trace.final.get("success_radius") or world.task.success_radius)
    return any(math.hypot(end["x"] - s.x, end["y"] - s.y) <= radius
               and (world.is_aerial or s.floor_id == end.get("floor_id", 0))
               for s in world.task.goal_positions)
