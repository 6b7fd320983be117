import pytest

from conrepair import program as P
from conrepair.syntax import Atomic, Wait, Notify, parse
from conftest import load


def labels(prog, thread):
    return P.labels_in_body(prog.threads[thread].body)


def test_basic_blocks_cover_straight_line_code():
    blocks = P.basic_blocks(load("iwl3945"))
    alive = [b for b in blocks if b.thread == 1]
    assert len(alive) == 1
    assert alive[0].units == ("1", "2", "3w..5", "6")
    assert alive[0].labels == ("1", "2", "3w", "3", "4", "5", "6")


def test_branches_delimit_blocks():
    blocks = P.basic_blocks(load("ex5"))
    writer = sorted(b.labels for b in blocks if b.thread == 0)
    assert ("2", "3") in writer and ("4", "5") in writer


def test_swap_and_orderings():
    p = load("paper1")
    q = P.apply_all(p, [P.Swap("A", "B"), P.Swap("A", "C")])
    assert labels(q, 1) == ["B", "C", "A"]
    assert P.holds_ordering(q, "C", "A") and not P.holds_ordering(p, "C", "A")
    assert P.holds_ordering(p, "A", "A")


def test_swap_requires_adjacency():
    with pytest.raises(P.IllegalTransformation):
        P.apply_transformation(load("paper1"), P.Swap("A", "C"))


def test_swap_requires_sequential_equivalence():
    p = load("iwl3945")
    assert P.swap_legality(p, P.Swap("B", "C")) is not None
    assert P.swap_legality(p, P.Swap("1", "2")) is None


def test_group_members_cannot_be_reordered_but_group_moves_as_unit():
    p = load("iwl3945")
    assert "group" in P.swap_legality(p, P.Swap("3", "4"))
    q = P.apply_transformation(p, P.Swap("3w..5", "6"))
    assert labels(q, 1) == ["1", "2", "6", "3w", "3", "4", "5"]


def test_atomic_section():
    p = load("paper1")
    q = P.apply_transformation(p, P.AtomicSection("B", "C"))
    region = q.threads[1].body[1]
    assert isinstance(region, Atomic) and region.label is None
    assert P.holds_atomicity(q, "B", "C") and not P.holds_atomicity(p, "B", "C")
    # inside one region both orders hold
    assert P.holds_ordering(q, "C", "B")


def test_wait_notify_insertion():
    p = load("fig4-right")
    q = P.apply_transformation(p, P.WaitNotify("B", "1"))
    t0 = q.threads[0].body
    t1 = q.threads[1].body
    assert isinstance(t1[0], Wait) and t1[1].label == "1"
    assert isinstance(t0[-1], Notify) and t0[-2].label == "B"
    assert P.holds_scheduling(q, "B", "1") and not P.holds_scheduling(p, "B", "1")


def test_preemption_points():
    p = load("paper1")
    assert P.acts_across_preemption(p, P.Swap("1", "2"))
    assert not P.acts_across_preemption(p, P.Swap("A", "B"))


def test_sequential_equivalence():
    p = parse("thread a:\n  1: x := 1;\n  2: y := x;\n  3: z := 2;\n")
    assert not P.sequentially_equivalent(p, "1", "2")
    assert P.sequentially_equivalent(p, "2", "3")


def test_satisfies():
    from conrepair import constraint as C
    p = load("paper1")
    assert P.satisfies(p, C.conj(C.Ordering("A", "B"), C.Ordering("1", "3")))
    assert not P.satisfies(p, C.Ordering("C", "A"))
    assert P.satisfies(p, C.disj(C.Ordering("C", "A"), C.Ordering("B", "C")))
