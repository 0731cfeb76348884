"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line in ``RESULTS``; the conftest prints them
in the terminal summary so they survive output capture.
"""

import dataclasses
import math
import time

import numpy as np
import pytest

from oracles import astar_3d, dijkstra_8, reference_apply
from test_metrics import FIXTURES as CLASSIFIER_FIXTURES
from test_planner import box_case, random_grid
from test_remote import Auditing, Stub
from test_tdm import as_tuples, op_alphabet, random_op, start_lists, to_ref
from waynav.agent import BBox, FaultyBackend, LangDecision, OracleBackend, Turn, VisDecision, parse_lang_response, parse_vis_response
from waynav.agent.prompts import EncodedImage, PromptPayload
from waynav.cli import main
from waynav.errors import BackendError
from waynav.geometry import backproject, project
from waynav.metrics import FAILURE_CATEGORIES, classify_failure, compute_metrics, ndtw, resample, spl
from waynav.planner import plan_3d_on_array
from waynav.planner.fmm import march
from waynav.remote import EndpointConfig, remote_decide
from waynav.runner import EpisodeConfig, run_episode
from waynav.tdm import COMPLETED, Update, apply, init_list
from waynav.world.generator import dead_end_suite, oracle_suite, ordered_subgoal_suite
from waynav.world.model import default_intrinsics

RESULTS: dict[int, str] = {}


def report(n: int, ok: bool, detail: str):
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


def success_rate(traces) -> float:
    return 100.0 * sum(bool(t.final["success"]) for t in traces) / len(traces)


# ---- shared episode runs ---------------------------------------------------------------------


@pytest.fixture(scope="module")
def oracle_runs():
    out = []
    for w in oracle_suite():
        t0 = time.perf_counter()
        t = run_episode(w, OracleBackend(), EpisodeConfig())
        out.append((w, t, time.perf_counter() - t0))
    return out


@pytest.fixture(scope="module")
def dead_end_runs():
    worlds = dead_end_suite(10)
    runs = {}
    for label, cfg in (("full", EpisodeConfig()), ("w/o SCB", EpisodeConfig.ablation("scb"))):
        for rate in (0.5, 0.0):
            runs[label, rate] = [
                (w, run_episode(w, FaultyBackend(OracleBackend(), rate, seed), dataclasses.replace(cfg, seed=seed)))
                for seed in range(3) for w in worlds
            ]
    return runs


@pytest.fixture(scope="module")
def ordered_runs():
    worlds = ordered_subgoal_suite(10)
    runs = {}
    for label, cfg in (("full", EpisodeConfig()), ("w/o TDM", EpisodeConfig.ablation("tdm"))):
        runs[label] = [
            (w, run_episode(w, OracleBackend(forgetful=True), dataclasses.replace(cfg, seed=seed)))
            for seed in range(3) for w in worlds
        ]
    return runs


# ---- 1 ---------------------------------------------------------------------------------------


def test_criterion_01_geometry_round_trip():
    k = default_intrinsics()
    rng = np.random.default_rng(1)
    us, vs = rng.uniform(0, k.width, 1000), rng.uniform(0, k.height, 1000)
    ds = rng.uniform(0.05, 50.0, 1000)
    t0 = time.perf_counter()
    worst = 0.0
    for u, v, d in zip(us, vs, ds):
        uu, vv = project(backproject(u, v, d, k), k)
        worst = max(worst, abs(uu - u), abs(vv - v))
    dt = time.perf_counter() - t0
    report(1, worst <= 1e-9 and dt < 1.0, f"max pixel error {worst:.2e}, {dt:.3f} s")


# ---- 2 ---------------------------------------------------------------------------------------


def test_criterion_02_fmm_vs_dijkstra():
    t0 = time.perf_counter()
    bad, worst = 0, 0.0
    for seed in range(200):
        occ = random_grid(seed)
        init = np.full(occ.shape, np.inf)
        init[16, 16] = 0.0
        f = march(~occ, init, 1.0)
        d = dijkstra_8(~occ, [(16, 16)])
        fin = np.isfinite(d)
        if not np.array_equal(fin, np.isfinite(f)):
            bad += 1
            continue
        err = float(np.max(np.abs(f[fin] - d[fin])))
        worst = max(worst, err)
        bad += err > math.sqrt(2.0) + 1e-9
    dt = time.perf_counter() - t0
    report(2, bad == 0 and dt < 30.0,
           f"{bad}/200 grids exceed one diagonal, worst |FMM-Dijkstra| {worst:.3f} cells, {dt:.1f} s")


# ---- 3 ---------------------------------------------------------------------------------------


def test_criterion_03_oracle_suite(oracle_runs):
    sr = success_rate([t for _, t, _ in oracle_runs])
    slowest = max(dt for *_, dt in oracle_runs)
    floors = {len(w.floors) if hasattr(w, "floors") else 1 for w, _, _ in oracle_runs}
    stairs = sum(any(s["action"] == "go_stair" for s in t.of_type("step")) for _, t, _ in oracle_runs)
    within = all(t.final["steps_taken"] <= 500 for _, t, _ in oracle_runs)
    report(3, sr == 100.0 and slowest < 2.0 and stairs >= 1 and within and len(oracle_runs) == 20,
           f"SR {sr:.1f}% over {len(oracle_runs)} worlds, {stairs} stair episodes, slowest {slowest:.2f} s,"
           f" floor counts {sorted(floors)}")


# ---- 4 ---------------------------------------------------------------------------------------


def test_criterion_04_checklist_semantics():
    import itertools
    import random

    mismatches = 0
    for n in range(5):
        alphabet = op_alphabet(n)
        batches = [()] + [(a,) for a in alphabet] + list(itertools.product(alphabet, repeat=2))
        for todo in start_lists(n):
            base = as_tuples(todo)
            for batch in batches:
                got, warnings = apply(todo, list(batch))
                want, rejected = reference_apply(base, [to_ref(o) for o in batch])
                mismatches += as_tuples(got) != want or len(warnings) != rejected
    rng = random.Random(4)
    todo = init_list([f"goal {k}" for k in range(5)])
    ops = empty_results = unstable = 0
    while ops < 500:
        batch = [random_op(rng, len(todo)) for _ in range(rng.randint(1, 6))]
        ops += len(batch)
        new, _ = apply(todo, batch)
        empty_results += sum(1 for it in new.items if it.status == COMPLETED and not it.result.strip())
        before = [it.content for it in todo.items]
        if len(set(before)) == len(before) and not any(type(o).__name__ == "Rewrite" for o in batch):
            pos = [before.index(it.content) for it in new.items if it.content in before]
            unstable += pos != sorted(pos)
        todo = new if new.items else init_list(["restart"])
    rollback = apply(init_list(["a"]), [Update(0, COMPLETED, "")])[0].items[0].status != COMPLETED
    report(4, mismatches == 0 and empty_results == 0 and unstable == 0 and rollback,
           f"{mismatches} reference mismatches on lists <= 4, {ops} random ops,"
           f" {empty_results} empty completions, {unstable} order violations")


# ---- 5 ---------------------------------------------------------------------------------------


def test_criterion_05_backtracking_effect(dead_end_runs):
    full = success_rate([t for _, t in dead_end_runs["full", 0.5]])
    ablated = success_rate([t for _, t in dead_end_runs["w/o SCB", 0.5]])
    clean_full = success_rate([t for _, t in dead_end_runs["full", 0.0]])
    clean_ablated = success_rate([t for _, t in dead_end_runs["w/o SCB", 0.0]])
    report(5, full - ablated >= 20.0 and clean_full == 100.0 and clean_ablated == 100.0,
           f"faulty 0.5: full {full:.1f}% vs w/o SCB {ablated:.1f}%;"
           f" fault-free: {clean_full:.1f}% / {clean_ablated:.1f}%")


# ---- 6 ---------------------------------------------------------------------------------------


def test_criterion_06_checklist_effect(ordered_runs):
    full = success_rate([t for _, t in ordered_runs["full"]])
    ablated = success_rate([t for _, t in ordered_runs["w/o TDM"]])
    report(6, full - ablated >= 20.0, f"forgetful oracle: full {full:.1f}% vs w/o TDM {ablated:.1f}%")


# ---- 7 ---------------------------------------------------------------------------------------


def test_criterion_07_metrics(oracle_runs, dead_end_runs, ordered_runs):
    exact = (spl(True, 7.0, 7.0) == 1.0 and abs(spl(True, 7.0, 14.0) - 0.5) <= 1e-12
             and spl(False, 7.0, 7.0) == 0.0)
    p = resample([[(0.0, 0.0, 0.0), (3.0, 1.0, 0.0), (3.0, 4.0, 0.0)]])
    self_one = abs(ndtw(p, p, 3.0) - 1.0) <= 1e-12
    pairs = [(w, t) for w, t, _ in oracle_runs]
    pairs += [x for v in dead_end_runs.values() for x in v]
    pairs += [x for v in ordered_runs.values() for x in v]
    violations = 0
    for w, t in pairs:
        m = compute_metrics(t, w)
        violations += bool(m.sr and not m.osr)
        violations += bool(t.final["success"] and not t.final["oracle_success"])
    report(7, exact and self_one and violations == 0,
           f"SPL exact {exact}, nDTW self {self_one}, SR=>OSR violations {violations} over {len(pairs)} traces")


# ---- 8 ---------------------------------------------------------------------------------------


def test_criterion_08_classifier():
    import random

    wrong = [(f, fam, e) for f, fam, e in CLASSIFIER_FIXTURES if classify_failure(f, fam, 3.0) != e]
    rng = random.Random(8)
    junk = [None, "x", math.nan, math.inf, -1.0]
    seen, crashes = set(), 0
    for _ in range(1000):
        val = lambda: rng.choice(junk) if rng.random() < 0.2 else rng.uniform(0, 40)  # noqa: E731
        final = {"success": rng.random() < 0.3, "oracle_success": rng.random() < 0.5, "distance_to_goal": val(),
                 "path_length": val(), "shortest_path_length": val(), "eqa_correct": rng.choice([True, False, None])}
        try:
            c = classify_failure(final, rng.choice(["VLN", "ObjectNav", "EQA", "AerialVLN"]), 3.0)
        except Exception:
            crashes += 1
            continue
        crashes += c not in FAILURE_CATEGORIES
        seen.add(c)
    report(8, not wrong and crashes == 0 and seen == set(FAILURE_CATEGORIES),
           f"{len(CLASSIFIER_FIXTURES) - len(wrong)}/{len(CLASSIFIER_FIXTURES)} fixtures, {crashes} crashes,"
           f" {len(seen)}/{len(FAILURE_CATEGORIES)} categories reached")


# ---- 9 ---------------------------------------------------------------------------------------


def test_criterion_09_determinism(tmp_path):
    worlds = tmp_path / "worlds"
    assert main(["worldgen", "--suite", "oracle", "--out", str(worlds)]) == 0
    dirs = [tmp_path / "a", tmp_path / "b"]
    for d in dirs:
        assert main(["run", "--backend", "oracle", "--seed", "7", "--worlds", str(worlds), "--out", str(d)]) == 0
    a = sorted(p.name for p in dirs[0].glob("*.trace.jsonl"))
    b = sorted(p.name for p in dirs[1].glob("*.trace.jsonl"))
    diff = [n for n in a if (dirs[0] / n).read_bytes() != (dirs[1] / n).read_bytes()]
    report(9, a == b and len(a) == 20 and not diff, f"{len(a)} trace files, {len(diff)} differ")


# ---- 10 --------------------------------------------------------------------------------------


def test_criterion_10_wire_protocol():
    lang = LangDecision(Turn("left"), "p", "t", "a", (Update(0, COMPLETED, "seen"),))
    vis = VisDecision(BBox(4, 5, 30, 40), "door")
    payload = PromptPayload(("x",), (EncodedImage("front", b"\x89PNG"),), {"kind": "decide"})
    echo = Stub(lambda path, body, n: (200, {"text": lang.to_json() if body["role"] == "lang" else vis.to_json()}, 0))
    late = Stub(lambda path, body, n: (200, {"text": "ok"}, 0.6 if n <= 3 else 0))
    dead = Stub(lambda path, body, n: (200, {"text": "late"}, 0.6))
    try:
        cfg = EndpointConfig(echo.url)
        round_trip = (parse_lang_response(remote_decide(cfg, "lang", payload)) == lang
                      and parse_vis_response(remote_decide(cfg, "vis", payload)) == vis)
        slept = []
        recovered = remote_decide(EndpointConfig(late.url, timeout=0.2), "lang", payload, sleep=slept.append) == "ok"
        schedule = slept == [1.0, 4.0, 16.0] and recovered
        exhausted = []
        try:
            remote_decide(EndpointConfig(dead.url, timeout=0.2, max_retries=1), "lang", payload,
                          sleep=exhausted.append)
            gave_up = False
        except BackendError as e:
            gave_up = e.kind == "timeout" and exhausted == [1.0]
    finally:
        echo.close()
        late.close()
        dead.close()
    leaks = []
    for w in oracle_suite()[:5] + dead_end_suite(3):
        run_episode(w, Auditing(FaultyBackend(OracleBackend(), 0.5, 0), leaks), EpisodeConfig(max_steps=200))
    report(10, round_trip and schedule and gave_up and not leaks,
           f"round trip {round_trip}, backoff {slept}, timeout surfaced {gave_up}, {len(leaks)} leaks")


# ---- 11 --------------------------------------------------------------------------------------


def test_criterion_11_visibility_graph():
    ratios = []
    for seed in range(50):
        occ, s, g, cs, cg = box_case(seed)
        ours = plan_3d_on_array(occ, 1.0, cs, cg).length
        ref = astar_3d(occ, s, g)
        ratios.append(abs(ours - ref) / ref)
    over = sum(r > 0.10 for r in ratios)
    report(11, over == 0, f"{over}/50 worlds beyond 10% of grid A*, worst {100 * max(ratios):.1f}%")
