import json

import numpy as np
import pytest

from conftest import box_world
from waynav.agent import (
    BBox,
    Backtrack,
    DoubleCheck,
    EpisodeProbe,
    GoStair,
    History,
    LangDecision,
    OracleBackend,
    Point,
    Turn,
    VisDecision,
    audit_payload,
    build_lang_prompt,
    build_recovery_prompt,
    build_vis_prompt,
    faulty_wrapper,
    oracle_lang_decide,
    oracle_vis_decide,
    parse_lang_response,
    parse_subgoals,
    parse_verification,
    parse_vis_response,
    sector_of,
)
from waynav.errors import GroundingFailed, UnparseableDecision
from waynav.geometry import Pose
from waynav.tdm import COMPLETED, Add, Update, init_list
from waynav.world import AgentState, render_panorama
from waynav.world.model import Site, View, default_intrinsics

RECORD = {
    "progress_analysis": "hallway reached",
    "reasoning_todo": "item 1 is done",
    "todo_ops": [{"op": "update", "index": 1, "status": "completed", "result": "hallway visible"},
                 {"op": "add", "content": "check the kitchen"}],
    "reasoning_action": "the sofa is to the left",
    "action": {"name": "turn", "direction": "left"},
}
EXPECTED = LangDecision(Turn("left"), "hallway reached", "item 1 is done", "the sofa is to the left",
                        (Update(1, COMPLETED, "hallway visible"), Add("check the kitchen")))


# ---- parsing ---------------------------------------------------------------------------------


def test_well_formed_record():
    assert parse_lang_response(json.dumps(RECORD)) == EXPECTED


def test_fenced_with_preamble():
    raw = "Sure, here is my decision:\n```json\n" + json.dumps(RECORD, indent=2) + "\n```\nGood luck."
    assert parse_lang_response(raw) == EXPECTED


def test_first_balanced_object_in_prose():
    raw = "I think the sofa is left. " + json.dumps(RECORD) + " Then I will {re-check}."
    assert parse_lang_response(raw) == EXPECTED
    # only the first balanced object is tried
    with pytest.raises(UnparseableDecision):
        parse_lang_response("note {this} first " + json.dumps(RECORD))


def test_alias_and_missing_ops():
    rec = {"action_reasoning": "go", "action": "turn(front)"}
    d = parse_lang_response(json.dumps(rec))
    assert d.reasoning_action == "go" and d.todo_ops == () and d.action == Turn("front")


@pytest.mark.parametrize("raw", ["no braces at all", "{not json}", json.dumps({"progress_analysis": "x"}),
                                 json.dumps({"action": {"name": "fly"}})])
def test_unparseable(raw):
    with pytest.raises(UnparseableDecision):
        parse_lang_response(raw)


def test_ladder_is_monotone():
    fenced = "```\n" + json.dumps(RECORD) + "\n```"
    assert parse_lang_response(fenced) == parse_lang_response(json.dumps(RECORD))


@pytest.mark.parametrize("action,expect", [
    ({"name": "backtrack", "waypoint_id": "3"}, Backtrack(3)),
    ({"name": "go_stair", "direction": "up"}, GoStair("up")),
    ({"name": "double_check", "target": "stop", "answer": "red"}, DoubleCheck("red")),
    ({"name": "turn", "args": {"direction": "ahead"}}, Turn("front")),
])
def test_action_variants(action, expect):
    assert parse_lang_response(json.dumps({"action": action})).action == expect


def test_bad_todo_op_dropped_with_warning():
    d = parse_lang_response(json.dumps({"action": "turn(left)", "todo_ops": [{"op": "explode"}, {"op": "remove", "index": 2}]}))
    assert len(d.todo_ops) == 1 and d.warnings


def test_round_trip_through_json():
    assert parse_lang_response(EXPECTED.to_json()) == EXPECTED


def test_vis_examples():
    assert parse_vis_response('{"select":[10,20,50,60],"target_desc":"doorway"}') == VisDecision(BBox(10, 20, 50, 60), "doorway")
    wide = parse_vis_response('{"select":[100,20,300,60]}')
    assert wide.select == BBox(100, 20, 127, 60) and wide.warnings
    assert parse_vis_response('{"select":[40,40,40,40]}').select == Point(40, 40)
    assert parse_vis_response('{"select":[7,9]}').select == Point(7, 9)
    assert parse_vis_response('{"select":null}').select is None
    with pytest.raises(UnparseableDecision):
        parse_vis_response('{"select":[1,2,3]}')


def test_verification_and_subgoals():
    assert parse_verification('{"confirm":"yes"}').confirm
    assert not parse_verification('{"confirm":false}').confirm
    with pytest.raises(UnparseableDecision):
        parse_verification('{"confirm":"maybe"}')
    assert parse_subgoals('{"subgoals":["a"," ","b"]}') == ["a", "b"]
    assert parse_subgoals('steps: ["x", "y"]') == ["x", "y"]


# ---- prompts ---------------------------------------------------------------------------------


@pytest.fixture
def scene():
    w = box_world(labels={"sofa": [(4.0, 2.5, 4.5, 3.5)]})
    pano = render_panorama(w, w.task.start)
    return w, pano


def test_prompt_deterministic(scene):
    w, pano = scene
    h = History()
    h.add("start room", "wp0/front")
    todo = init_list(["reach hallway", "find sofa"])
    a = build_lang_prompt(w.task, pano, h, todo, w.labels, 3)
    b = build_lang_prompt(w.task, render_panorama(w, w.task.start), h, todo, w.labels, 3)
    assert json.dumps(a.to_wire("lang")) == json.dumps(b.to_wire("lang"))
    assert len(a.images) == 4


def test_checklist_block(scene):
    w, pano = scene
    todo = init_list(["reach hallway", "find sofa", "stop"])
    with_todo = build_lang_prompt(w.task, pano, History(), todo, w.labels)
    block = next(b for b in with_todo.text_blocks if b.startswith("TODO list"))
    assert len(block.splitlines()) - 1 == len(todo)
    without = build_lang_prompt(w.task, pano, History(), None, w.labels)
    assert "TODO list" not in without.text and "todo_ops" not in without.text


def test_recovery_prompt_evidence(scene):
    w, pano = scene
    frames = [(f"wp2/step{k}", pano.views["front"]) for k in range(3)]
    p = build_recovery_prompt(w.task, pano, "right", frames, w.labels, History(), None)
    assert "Failed direction: right" in p.text
    assert p.text.index("wp2/step0") < p.text.index("wp2/step1") < p.text.index("wp2/step2")
    assert p.metadata["failed_direction"] == "right" and p.kind == "recover"
    assert len(p.images) == 4 + 3


def test_payloads_do_not_leak(scene):
    w, pano = scene
    p = build_lang_prompt(w.task, pano, History(), init_list(["find sofa"]), w.labels)
    assert audit_payload(p, w) == []
    v = build_vis_prompt(w.task, "front", pano.views["front"], "", w.labels, pano.pose)
    assert audit_payload(v, w) == []
    # sanity: the audit does see a planted leak
    g = w.task.goal_positions[0]
    bad = build_lang_prompt(w.task, pano, History(), None, w.labels)
    bad = type(bad)(bad.text_blocks + (f"target at {g.x:.2f}, {g.y:.2f}",), bad.images, bad.metadata)
    assert audit_payload(bad, w)


# ---- oracles ---------------------------------------------------------------------------------


def test_sector_rule():
    assert [sector_of(a) for a in (0, 44, 46, 135, 136, -46, 180)] == \
        ["front", "front", "left", "left", "back", "right", "back"]


def test_oracle_goal_ahead_turns_front():
    w = box_world(size_m=8.0, start=(1.0, 4.0, 0.0), goal=(6.0, 4.0), radius=1.0)
    d = oracle_lang_decide(w, AgentState(w.task.start), None)
    assert d.action == Turn("front")


def test_oracle_within_radius_stops():
    w = box_world(size_m=8.0, start=(1.0, 4.0, 0.0), goal=(3.9, 4.0), radius=3.0)
    assert isinstance(oracle_lang_decide(w, AgentState(w.task.start), None).action, DoubleCheck)


def test_oracle_eqa_answers():
    w = box_world(family="EQA", start=(4.5, 3.0, 0.0), goal=(5.0, 3.0))
    assert oracle_lang_decide(w, AgentState(w.task.start), None).action == DoubleCheck("red")


def test_oracle_marks_first_subgoal():
    subs = [Site(2.0, 3.0, label="door"), Site(5.0, 3.0, label="sofa")]
    w = box_world(family="VLN", start=(1.5, 3.0, 0.0), goal=(5.0, 3.0), radius=1.0, ordered_subgoal_positions=subs)
    d = oracle_lang_decide(w, AgentState(w.task.start), init_list(["reach the door", "stop near the sofa"]))
    assert d.todo_ops and d.todo_ops[0].index == 1 and d.todo_ops[0].status == COMPLETED and d.todo_ops[0].result
    assert d.action == Turn("front")


def _view(depth, semantic=None):
    k = default_intrinsics()
    sem = np.zeros((k.height, k.width), np.int32) if semantic is None else semantic
    return View("front", depth, sem, k, 0.0)


def test_oracle_vis_label_box():
    k = default_intrinsics()
    sem = np.zeros((k.height, k.width), np.int32)
    sem[40:60, 30:46] = 5
    d = oracle_vis_decide(_view(np.full((k.height, k.width), 3.0), sem), "sofa", {5: "sofa"})
    assert d.select == BBox(30, 40, 45, 59)


def test_oracle_vis_distal_and_failure():
    k = default_intrinsics()
    depth = np.full((k.height, k.width), 1.0)
    depth[:, 90] = 7.0
    d = oracle_vis_decide(_view(depth), "sofa", {})
    assert d.select.center[0] == 90
    with pytest.raises(GroundingFailed):
        oracle_vis_decide(_view(np.full((k.height, k.width), 1.5)), "sofa", {})


# ---- faulty wrapper --------------------------------------------------------------------------


def _decide_payloads(w, n=12):
    rng = np.random.default_rng(0)
    free = np.argwhere(~w.floors[0].occupied)
    out = []
    for _ in range(n):
        r, c = free[rng.integers(len(free))]
        pose = Pose(*w.cell_center(int(r), int(c)))
        pano = render_panorama(w, pose)
        out.append((pose, pano, build_lang_prompt(w.task, pano, History(), None, w.labels)))
    return out


@pytest.fixture
def faulty_scene():
    return box_world(size_m=8.0, walls=[(3.9, 0.0, 4.1, 5.0)], start=(1.0, 1.0, 0.0), goal=(7.0, 1.0), radius=0.5)


def _run(backend, w, items):
    out = []
    for pose, pano, payload in items:
        b = backend.for_episode(w, EpisodeProbe(pose, pano))
        out.append(b.decide_lang(payload))
    return out


def test_faulty_rate_zero_is_identity(faulty_scene):
    items = _decide_payloads(faulty_scene)
    assert _run(faulty_wrapper(OracleBackend(), 0.0, 1), faulty_scene, items) == \
        _run(OracleBackend(), faulty_scene, items)


def test_faulty_rate_one_changes_every_turn(faulty_scene):
    items = _decide_payloads(faulty_scene)
    clean = [parse_lang_response(r).action for r in _run(OracleBackend(), faulty_scene, items)]
    bad = [parse_lang_response(r).action for r in _run(faulty_wrapper(OracleBackend(), 1.0, 1), faulty_scene, items)]
    for c, b in zip(clean, bad):
        if isinstance(c, Turn):
            assert isinstance(b, Turn) and b != c
        else:
            assert b == c


def test_faulty_deterministic(faulty_scene):
    items = _decide_payloads(faulty_scene)
    a = _run(faulty_wrapper(OracleBackend(), 0.5, 3), faulty_scene, items)
    b = _run(faulty_wrapper(OracleBackend(), 0.5, 3), faulty_scene, items)
    assert a == b


def test_faulty_rejects_bad_rate():
    with pytest.raises(ValueError):
        faulty_wrapper(OracleBackend(), 1.5, 0)
