"""Episode metrics, seed-level aggregation and the rule-based failure classifier."""

from __future__ import annotations

import json
import math
import statistics
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional

import numba as nb
import numpy as np

from .errors import MissingReference, NoData
from .geometry import Pose
from .planner.fmm import descend
from .world.model import Site, WorldModel
from .world.sim import geodesic_distance, truth_fields

RESAMPLE_STEP = 0.25
UNDERSHOT_BAND = 2.0
WANDER_FACTOR = 2.5

FAILURE_CATEGORIES = (
    "EarlyStopWrongTarget",
    "ReachedMissedStop",
    "WrongAnswerEQA",
    "ApproachedUndershot",
    "WanderedLost",
    "NotAFailure",
)


@dataclass(frozen=True)
class EpisodeMetrics:
    ne: float
    sr: bool
    osr: bool
    spl: float
    ndtw: Optional[float] = None
    acc: Optional[bool] = None
    world: str = ""
    seed: int = 0
    family: str = ""
    failure: str = "NotAFailure"

    def __post_init__(self):
        if self.sr and not self.osr:
            raise ValueError("success without oracle success")
        if self.spl > 0 and not self.sr:
            raise ValueError("positive SPL on a failed episode")
        for name in ("spl", "ndtw"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


# ---- scalar formulas ---------------------------------------------------------------------------


def spl(success: bool, shortest: float, path_length: float) -> float:
    """Success weighted by shortest / max(taken, shortest)."""
    if not success:
        return 0.0
    if shortest <= 0.0:
        return 1.0
    return shortest / max(path_length, shortest)


def answers_match(given: Optional[str], truth: Optional[str]) -> bool:
    if given is None or truth is None:
        return False
    return given.strip().casefold() == truth.strip().casefold()


# ---- path resampling and DTW -------------------------------------------------------------------


def resample(pieces: list[list[tuple[float, float, float]]], step: float = RESAMPLE_STEP) -> np.ndarray:
    """Points every ``step`` metres of arc length along each piece, ends included.

    Pieces are continuous runs (a floor change starts a new piece). Repeated
    points contribute no arc length, so duplicates never change the result.
    """
    out = []
    for piece in pieces:
        pts = [np.asarray(p, float) for p in piece]
        pts = [p for i, p in enumerate(pts) if i == 0 or not np.array_equal(p, pts[i - 1])]
        if not pts:
            continue
        out.append(pts[0])
        until = step  # arc length still to cover before the next sample
        for a, b in zip(pts, pts[1:]):
            seg = float(np.linalg.norm(b - a))
            pos = 0.0
            while until <= seg - pos + 1e-12:
                pos += until
                out.append(a + (b - a) * min(pos / seg, 1.0))
                until = step
            until -= seg - pos
        if np.linalg.norm(out[-1] - pts[-1]) > 1e-9:
            out.append(pts[-1])
    return np.array(out, float).reshape(-1, 3)


@nb.njit(cache=True)
def _dtw(a, b):
    n, m = a.shape[0], b.shape[0]
    prev = np.full(m + 1, np.inf)
    prev[0] = 0.0
    for i in range(1, n + 1):
        cur = np.full(m + 1, np.inf)
        for j in range(1, m + 1):
            d = math.sqrt((a[i - 1, 0] - b[j - 1, 0]) ** 2 + (a[i - 1, 1] - b[j - 1, 1]) ** 2
                          + (a[i - 1, 2] - b[j - 1, 2]) ** 2)
            cur[j] = d + min(prev[j], cur[j - 1], prev[j - 1])
        prev = cur
    return prev[m]


def dtw(query: np.ndarray, reference: np.ndarray) -> float:
    if len(query) == 0 or len(reference) == 0:
        raise ValueError("DTW needs two non-empty paths")
    return float(_dtw(np.ascontiguousarray(query, float), np.ascontiguousarray(reference, float)))


def ndtw(query: np.ndarray, reference: np.ndarray, threshold: float) -> float:
    """exp(-DTW / (|reference| * threshold)) on already resampled point lists."""
    return math.exp(-dtw(query, reference) / (len(reference) * threshold))


# ---- reference path ----------------------------------------------------------------------------


def _geodesic_leg(world: WorldModel, start: tuple[float, float, int], site: Site):
    """Cell-centre polyline pieces along the true shortest route from ``start`` to ``site``."""
    fields = truth_fields(world, (site,))
    x, y, f = start
    pieces = []
    for _ in range(len(world.floors) + 1):
        T = fields[f]
        r, c = world.cell_of(x, y)
        if not math.isfinite(T[r, c]):
            raise MissingReference(f"no route from {(x, y, f)} to {site}")
        cells = descend(T, ~world.floors[f].occupied, (r, c))
        z = world.floor_z(f)
        piece = [(x, y, z)] + [(*world.cell_center(int(i), int(j)), z) for i, j in cells[1:]]
        end = (int(cells[-1][0]), int(cells[-1][1]))
        if T[end] <= 0.0:
            piece.append((site.x, site.y, z))
            pieces.append(piece)
            return pieces, (site.x, site.y, site.floor_id)
        pieces.append(piece)
        hop = None
        for link in world.stair_links:
            for fa, ca, fb, cb in ((link.floor_a, link.cell_a, link.floor_b, link.cell_b),
                                   (link.floor_b, link.cell_b, link.floor_a, link.cell_a)):
                if fa == f and tuple(ca) == end and fields[fb][tuple(cb)] <= T[end]:
                    hop = (fb, cb)
        if hop is None:
            raise MissingReference(f"route to {site} stalls at cell {end} on floor {f}")
        f = hop[0]
        x, y = world.cell_center(*hop[1])
    raise MissingReference(f"route to {site} does not settle")


def reference_path(world: WorldModel) -> list[list[tuple[float, float, float]]]:
    """True shortest route from the start through every ordered sub-goal, as continuous pieces."""
    task = world.task
    if not task.ordered_subgoal_positions:
        raise MissingReference(f"{world.name}: task has no ordered sub-goals")
    s = task.start
    cur = (s.x, s.y, s.floor_id)
    pieces: list = []
    for site in task.ordered_subgoal_positions:
        leg, cur = _geodesic_leg(world, cur, site)
        if pieces and leg and pieces[-1][-1][2] == leg[0][0][2]:
            pieces[-1].extend(leg[0])
            leg = leg[1:]
        pieces.extend(leg)
    return pieces


def executed_pieces(world: WorldModel, poses: list[Pose]) -> list[list[tuple[float, float, float]]]:
    pieces: list = []
    last_floor = None
    for p in poses:
        z = p.z if world.is_aerial else world.floor_z(p.floor_id)
        if p.floor_id != last_floor:
            pieces.append([])
            last_floor = p.floor_id
        pieces[-1].append((p.x, p.y, z))
    return pieces


# ---- per-episode metrics -----------------------------------------------------------------------


def _within(world: WorldModel, pose: Pose, sites: tuple, radius: float) -> bool:
    if min(math.dist(pose.xyz, (s.x, s.y, s.z)) for s in sites) > radius + 1e-9 and world.is_aerial:
        return False
    return geodesic_distance(world, pose, sites) <= radius


def compute_metrics(trace, world: WorldModel) -> EpisodeMetrics:
    """Metrics of a finished episode, recomputed against the true world."""
    final = trace.final
    if not final:
        raise ValueError("trace has no final record")
    task = world.task
    sites = tuple(task.goal_positions)
    radius = float(final.get("success_radius") or task.success_radius)
    end = Pose.from_dict(final["final_pose"])
    ne = geodesic_distance(world, end, sites)
    sr = bool(final.get("stopped")) and ne <= radius
    poses = trace.poses() + [end]
    osr = sr or any(_within(world, p, sites, radius) for p in poses)
    shortest = geodesic_distance(world, task.start, sites)
    path_len = float(final.get("path_length", 0.0))
    nd = None
    if task.family == "VLN":
        ref = resample(reference_path(world))
        nd = ndtw(resample(executed_pieces(world, trace.poses())), ref, radius)
    acc = answers_match(final.get("eqa_answer"), task.eqa_answer) if task.family == "EQA" else None
    failure = classify_failure(dict(final, distance_to_goal=ne, success=sr, oracle_success=osr,
                                    shortest_path_length=shortest, eqa_correct=acc), task.family, radius)
    return EpisodeMetrics(ne, sr, osr, spl(sr, shortest, path_len), nd, acc, world.name,
                          int(getattr(trace, "seed", 0)), task.family, failure)


# ---- failure classification --------------------------------------------------------------------


def _num(v, default=math.nan) -> float:
    try:
        return float(v)
    except (TypeError, ValueError):
        return default


def classify_failure(final: dict, task_family: str, radius: float, *, undershot_band: float = UNDERSHOT_BAND,
                     wander_factor: float = WANDER_FACTOR) -> str:
    """One category per final state; every input, however malformed, lands somewhere.

    An EQA trial counts as a success only when the answer is right, so a
    correct stop with a wrong answer is an answering failure rather than a
    navigation one.
    """
    success = bool(final.get("success"))
    oracle = bool(final.get("oracle_success"))
    eqa = task_family == "EQA"
    correct = bool(final.get("eqa_correct"))
    if success and (not eqa or correct):
        return "NotAFailure"
    if eqa and oracle and not correct:
        return "WrongAnswerEQA"
    if oracle:
        return "ReachedMissedStop"
    ne = _num(final.get("distance_to_goal"))
    r = _num(radius)
    if r < ne <= r + undershot_band:
        return "ApproachedUndershot"
    if _num(final.get("path_length")) > wander_factor * _num(final.get("shortest_path_length")):
        return "WanderedLost"
    return "EarlyStopWrongTarget"


# ---- aggregation -------------------------------------------------------------------------------

METRIC_NAMES = ("ne", "sr", "osr", "spl", "ndtw", "acc")


@dataclass
class SummaryTable:
    label: str
    n_trials: int
    seeds: list[int]
    metrics: dict[str, tuple[float, float]]  # name -> (mean of seed means, sample std of seed means)
    failures: dict[str, dict] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"label": self.label, "n_trials": self.n_trials, "seeds": self.seeds,
                "metrics": {k: {"mean": m, "std": s} for k, (m, s) in self.metrics.items()},
                "failures": self.failures}


def aggregate(runs: Iterable[EpisodeMetrics], label: str = "") -> SummaryTable:
    """Mean and sample standard deviation over per-seed means, plus the failure histogram.

    With a single seed the spread is reported as 0.
    """
    runs = list(runs)
    if not runs:
        raise NoData("no episodes to aggregate")
    by_seed: dict[int, list[EpisodeMetrics]] = {}
    for m in runs:
        by_seed.setdefault(m.seed, []).append(m)
    seeds = sorted(by_seed)
    table = {}
    for name in METRIC_NAMES:
        means = []
        for s in seeds:
            vals = [float(getattr(m, name)) for m in by_seed[s] if getattr(m, name) is not None]
            if vals:
                means.append(statistics.fmean(vals))
        if means:
            table[name] = (statistics.fmean(means), statistics.stdev(means) if len(means) > 1 else 0.0)
    counts = Counter(m.failure for m in runs)
    n_fail = sum(v for k, v in counts.items() if k != "NotAFailure")
    failures = {}
    for cat in FAILURE_CATEGORIES:
        c = counts.get(cat, 0)
        failures[cat] = {
            "count": c,
            "pct_trials": 100.0 * c / len(runs),
            "pct_failures": (100.0 * c / n_fail) if n_fail and cat != "NotAFailure" else 0.0,
        }
    return SummaryTable(label, len(runs), seeds, table, failures)


def format_text(tables: list[SummaryTable]) -> str:
    """Aligned table: one row per configuration, one column per metric, then failure shares."""
    present = [n for n in METRIC_NAMES if any(n in t.metrics for t in tables)]
    head = ["config", "n"] + [n.upper() for n in present]
    rows = []
    for t in tables:
        row = [t.label or "-", str(t.n_trials)]
        for n in present:
            if n in t.metrics:
                m, s = t.metrics[n]
                scale = 1.0 if n == "ne" else 100.0
                row.append(f"{m * scale:.2f}±{s * scale:.2f}")
            else:
                row.append("-")
        rows.append(row)
    lines = _align([head] + rows)
    cats = [c for c in FAILURE_CATEGORIES if c != "NotAFailure"]
    fhead = ["config"] + cats
    frows = [[t.label or "-"] + [f"{t.failures[c]['count']} ({t.failures[c]['pct_failures']:.1f}%)" for c in cats]
             for t in tables]
    return "\n".join(lines + ["", "failures (share of failed trials):"] + _align([fhead] + frows)) + "\n"


def _align(rows: list[list[str]]) -> list[str]:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows]


def format_json(tables: list[SummaryTable]) -> str:
    return json.dumps({"configurations": [t.to_dict() for t in tables]}, indent=2, sort_keys=True) + "\n"
