import itertools
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import reference_apply
from waynav.errors import EmptyPlan
from waynav.tdm import (
    COMPLETED,
    PENDING,
    Add,
    Remove,
    Rewrite,
    TodoItem,
    TodoList,
    Update,
    apply,
    find_rendered,
    init_list,
    parse_text,
    render_text,
)


def as_tuples(todo):
    return [(it.content, it.status, it.result) for it in todo.items]


def to_ref(op):
    if isinstance(op, Update):
        return ("update", op.index, op.status, op.result)
    if isinstance(op, Rewrite):
        return ("rewrite", op.index, op.content)
    if isinstance(op, Add):
        return ("add", op.content, op.index)
    return ("remove", op.index)


def test_init_list():
    t = init_list(["reach hallway", "find sofa"])
    assert len(t) == 2 and t.revision == 0
    assert all(it.status == PENDING and it.result == "" for it in t.items)
    assert parse_text(render_text(t)) == t
    with pytest.raises(EmptyPlan):
        init_list([])
    with pytest.raises(EmptyPlan):
        init_list(["  "])


def test_update_completed_stores_result():
    t, w = apply(init_list(["a", "b"]), [Update(1, COMPLETED, "saw the sofa at the window")])
    assert t.items[0] == TodoItem("a", COMPLETED, "saw the sofa at the window")
    assert w == []


def test_completion_without_result_rolls_back():
    t, w = apply(init_list(["a", "b"]), [Update(1, COMPLETED, "")])
    assert t.items[0].status == PENDING and len(w) == 1


def test_empty_batch_bumps_revision_only():
    t0 = init_list(["a"])
    t1, w = apply(t0, [])
    assert t1.items == t0.items and t1.revision == 1 and w == []


def test_out_of_order_completion_and_repending():
    t, _ = apply(init_list(["a", "b", "c"]), [Update(3, COMPLETED, "seen")])
    assert t.completed_indices() == [3]
    t, w = apply(t, [Update(3, PENDING, "")])
    assert t.completed_indices() == [] and w == []


def test_indices_refer_to_pre_batch_list():
    t, w = apply(init_list(["a", "b", "c"]), [Remove(1), Update(2, COMPLETED, "ok"), Add("z", 1)])
    assert as_tuples(t) == [("z", PENDING, ""), ("b", COMPLETED, "ok"), ("c", PENDING, "")]
    assert w == []


def test_op_on_removed_item_is_skipped():
    t, w = apply(init_list(["a", "b"]), [Remove(2), Rewrite(2, "bb")])
    assert as_tuples(t) == [("a", PENDING, "")] and len(w) == 1


def test_render_examples():
    t, _ = apply(init_list(["a"]), [Remove(1)])
    assert render_text(t) == "TODO list (revision 1):"
    t, _ = apply(init_list(["a", "b"]), [Update(2, COMPLETED, 'sofa "left" of door')])
    text = render_text(t)
    assert text.count("\n") == len(t)
    assert "sofa \\\"left\\\" of door" in text
    assert find_rendered("preamble\n" + text + "\nafter") == t


# ---- exhaustive comparison on small lists ----------------------------------------------------


def op_alphabet(n):
    idx = range(0, n + 2)
    ops = [Update(i, s, r) for i in idx for s in (PENDING, COMPLETED, "done") for r in ("", "r")]
    ops += [Rewrite(i, c) for i in idx for c in ("", "c")]
    ops += [Add(c, i) for c in ("", "a") for i in (None, *range(0, n + 3))]
    ops += [Remove(i) for i in idx]
    return ops


def start_lists(n):
    for statuses in itertools.product((PENDING, COMPLETED), repeat=n):
        yield TodoList(tuple(TodoItem(f"i{k}", s, "e" if s == COMPLETED else "") for k, s in enumerate(statuses)), 3)


@pytest.mark.parametrize("n", [0, 1, 2, 3, 4])
def test_exhaustive_small_lists_match_reference(n):
    alphabet = op_alphabet(n)
    batches = [()] + [(a,) for a in alphabet] + list(itertools.product(alphabet, repeat=2))
    for todo in start_lists(n):
        base = as_tuples(todo)
        for batch in batches:
            got, warnings = apply(todo, list(batch))
            want, rejected = reference_apply(base, [to_ref(o) for o in batch])
            assert as_tuples(got) == want, (base, batch)
            assert len(warnings) == rejected
            assert got.revision == todo.revision + 1


# ---- randomized batches ----------------------------------------------------------------------


def random_op(rng, n):
    k = rng.randrange(4)
    i = rng.randint(-1, n + 2)
    if k == 0:
        return Update(i, rng.choice([PENDING, COMPLETED, COMPLETED, "bogus"]), rng.choice(["", " ", "seen it"]))
    if k == 1:
        return Rewrite(i, rng.choice(["", "new text"]))
    if k == 2:
        return Add(rng.choice(["", "extra"]), rng.choice([None, i]))
    return Remove(i)


def test_randomized_500_op_suite():
    rng = random.Random(0)
    todo = init_list([f"goal {k}" for k in range(5)])
    done = 0
    while done < 500:
        batch = [random_op(rng, len(todo)) for _ in range(rng.randint(1, 6))]
        done += len(batch)
        new, warnings = apply(todo, batch)
        want, rejected = reference_apply(as_tuples(todo), [to_ref(o) for o in batch])
        assert as_tuples(new) == want
        assert (len(warnings) > 0) == (rejected > 0)
        assert all(it.result for it in new.items if it.status == COMPLETED)
        # order stability: pre-batch items that survive keep their relative order
        survivors = [it.content for it in todo.items]
        positions = [survivors.index(c) for c in (it.content for it in new.items) if c in survivors]
        if len(set(survivors)) == len(survivors):
            assert positions == sorted(positions) or any(isinstance(o, Rewrite) for o in batch)
        assert new.revision == todo.revision + 1
        todo = new
        if not todo.items:
            todo = init_list(["restart"])


# ---- rendering properties --------------------------------------------------------------------

text = st.text(min_size=1, max_size=12).filter(lambda s: s.strip() == s and s)
items = st.lists(
    st.one_of(
        st.builds(TodoItem, text, st.just(PENDING), st.just("")),
        st.builds(TodoItem, text, st.just(COMPLETED), text),
    ),
    max_size=5,
)
lists = st.builds(lambda its, r: TodoList(tuple(its), r), items, st.integers(0, 50))


@given(lists)
def test_render_round_trip(t):
    assert parse_text(render_text(t)) == t


@given(lists, lists)
def test_render_injective(a, b):
    if a != b:
        assert render_text(a) != render_text(b)


@given(st.lists(st.tuples(st.integers(-2, 6), st.sampled_from([PENDING, COMPLETED, "x"]), st.sampled_from(["", "r"])),
                max_size=6))
def test_warnings_iff_rejected(raw):
    todo = init_list(["a", "b", "c", "d"])
    ops = [Update(i, s, r) for i, s, r in raw]
    _, warnings = apply(todo, ops)
    _, rejected = reference_apply(as_tuples(todo), [to_ref(o) for o in ops])
    assert (len(warnings) > 0) == (rejected > 0)
