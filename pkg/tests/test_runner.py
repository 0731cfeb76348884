import math

import numpy as np
import pytest

from waynav.agent import BBox, FaultyBackend, OracleBackend, Point, VisDecision
from waynav.errors import GroundingDepthFailure
from waynav.geometry import Pose
from waynav.runner import EpisodeConfig, EpisodeTrace, resolve_target_point, run_episode
from waynav.world import geodesic_distance
from waynav.world.generator import GeneratorSpec, dead_end_suite, generate_world
from waynav.world.model import View, default_intrinsics


@pytest.fixture(scope="module")
def room_trace():
    w = generate_world(5, GeneratorSpec(layout="single_room", single_room_size=12.0, goal_distance=3.0), name="room12")
    return w, run_episode(w, OracleBackend(), EpisodeConfig())


@pytest.fixture(scope="module")
def dead_end_runs():
    worlds = dead_end_suite(4)
    out = []
    for w in worlds:
        backend = FaultyBackend(OracleBackend(), 0.5, 1)
        out.append((w, run_episode(w, backend, EpisodeConfig(seed=1))))
    return out


def test_single_room_success(room_trace):
    _, t = room_trace
    assert t.final["success"] and t.final["stopped"]
    # decision rounds; the counter also holds the checklist set-up call and the stop verification
    assert len(t.of_type("lang")) <= 3
    assert t.final["lang_calls"] == len(t.of_type("lang")) + 2
    assert t.final["termination"] == "stop"


def _displacement_sum(t: EpisodeTrace) -> float:
    poses = t.poses()
    return sum(math.dist(a.xyz, b.xyz) for a, b in zip(poses, poses[1:]))


def test_path_length_is_sum_of_displacements(room_trace, dead_end_runs):
    for _, t in [room_trace, *dead_end_runs]:
        assert t.final["path_length"] == pytest.approx(_displacement_sum(t), abs=1e-9)


def test_oracle_success_iff_pose_entered_radius(room_trace, dead_end_runs):
    for w, t in [room_trace, *dead_end_runs]:
        sites = tuple(w.task.goal_positions)
        r = t.final["success_radius"]
        entered = any(geodesic_distance(w, p, sites) <= r for p in t.poses())
        assert t.final["oracle_success"] == entered
        if t.final["success"]:
            assert t.final["oracle_success"]


def test_stop_semantics(room_trace, dead_end_runs):
    for _, t in [room_trace, *dead_end_runs]:
        steps = t.of_type("step")
        last_stop = bool(steps) and steps[-1]["action"] == "stop"
        confirmed = [r for r in t.of_type("verify") if r["confirm"]]
        assert t.final["stopped"] == (last_stop and bool(confirmed))


def test_tdm_applied_before_dispatch(dead_end_runs):
    for _, t in dead_end_runs:
        recs = t.records
        for i, r in enumerate(recs):
            if r["type"] in ("lang", "recovery"):
                nxt = recs[i + 1]
                assert nxt["type"] == "tdm" and nxt["source"] in ("decide", "recover")


def test_backtracks_return_close_and_keep_the_checklist(dead_end_runs):
    seen = 0
    for _, t in dead_end_runs:
        for i, r in enumerate(t.records):
            if r["type"] != "backtrack" or r["status"] != "arrived":
                continue
            seen += 1
            assert r["pose_error"] <= 0.3
            before = [x for x in t.records[:i] if x["type"] == "tdm"][-1]
            after = [x for x in t.records[i:] if x["type"] == "tdm"]
            if after:
                assert after[0]["revision"] > before["revision"]
                assert len(after[0]["list"]["items"]) >= len(before["list"]["items"]) - len(
                    [o for o in after[0]["ops"] if o["op"] == "remove"])
    assert seen > 0


def test_without_tdm_there_is_no_checklist():
    w = generate_world(6, GeneratorSpec(layout="single_room", single_room_size=12.0, goal_distance=5.0))
    t = run_episode(w, OracleBackend(), EpisodeConfig.ablation("tdm"))
    assert t.final["success"]
    assert not t.of_type("tdm")
    for r in t.records:
        assert "tdm_revision" not in r
        if r["type"] == "lang":
            assert "todo_ops" not in r["parsed"]


def test_termination_bounds_under_faults():
    w = dead_end_suite(1)[0]
    for cfg in (EpisodeConfig(max_steps=60), EpisodeConfig(lang_calls_cap=4), EpisodeConfig(scb=False, max_steps=120)):
        t = run_episode(w, FaultyBackend(OracleBackend(), 1.0, 0), cfg)
        assert t.final["steps_taken"] <= cfg.max_steps
        assert t.final["lang_calls"] <= cfg.lang_calls_cap
        assert t.final["termination"] in ("stop", "max_steps", "lang_cap")


def test_trace_round_trip(tmp_path, room_trace):
    _, t = room_trace
    p = t.write(tmp_path)
    assert p.name == "room12_0.trace.jsonl"
    back = EpisodeTrace.load(p)
    assert back.final == t.final and back.records == t.records


def test_config_validation():
    with pytest.raises(ValueError):
        EpisodeConfig(max_steps=0)
    with pytest.raises(ValueError):
        EpisodeConfig.ablation("everything")
    c = EpisodeConfig.ablation("tdm")
    assert (c.tdm, c.scb) == (False, True)


# ---- grounding -------------------------------------------------------------------------------


def _wall_view(depth_value=2.0):
    k = default_intrinsics()
    depth = np.full((k.height, k.width), depth_value)
    return View("front", depth, np.zeros((k.height, k.width), np.int32), k, 0.0)


def test_box_on_wall_two_metres_ahead():
    k = default_intrinsics()
    cu, cv = int(k.cx), int(k.cy)
    vis = VisDecision(BBox(cu - 5, cv - 5, cu + 5, cv + 5))
    p = resolve_target_point(vis, _wall_view(), Pose(1.0, 1.0, 0.0, 0.0))
    assert (p.x, p.y) == pytest.approx((3.0, 1.0), abs=1e-9)


def test_spiral_to_valid_neighbour():
    view = _wall_view()
    view.depth[50, 60] = np.inf
    p = resolve_target_point(VisDecision(BBox(58, 48, 62, 52)), view, Pose(0, 0, 0, 90), 0.0)
    assert math.isfinite(p.x) and p.y > 1.9


def test_no_valid_depth_in_box():
    view = _wall_view(np.inf)
    with pytest.raises(GroundingDepthFailure):
        resolve_target_point(VisDecision(BBox(10, 10, 20, 20)), view, Pose(0, 0))
    with pytest.raises(GroundingDepthFailure):
        resolve_target_point(VisDecision(None), _wall_view(), Pose(0, 0))
    assert resolve_target_point(VisDecision(Point(64, 48)), _wall_view(), Pose(0, 0)).x == pytest.approx(2.0)
