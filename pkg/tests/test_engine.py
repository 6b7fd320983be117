import pytest

from conrepair import constraint as C
from conrepair import engine as G
from conrepair import explorer as E
from conrepair import program as P
from conftest import load


def thread_labels(prog, i):
    return P.labels_in_body(prog.threads[i].body)


def test_paper1_mixed():
    r = G.repair(load("paper1"))
    assert r.fixed and r.iterations == 1
    assert thread_labels(r.program, 1) == ["B", "C", "A"]
    assert E.verify(r.program).status == "correct"
    assert r.regression_free and r.monotone and r.satisfies_constraint
    assert r.preservation == {"sequential": "ok", "preemption_free": "ok"}


def test_paper1_bad_only_takes_the_regression_path():
    r = G.repair(load("paper1"), G.RepairConfig(mode="bad-only"))
    assert r.fixed and 1 < r.iterations <= 3
    assert r.history[0].transformations == ["swap(B, C)"]


def test_input_contract():
    r = G.repair(load("fig4-right"))
    assert r.status == "input-contract-violation"
    assert G.bad_sequential_trace(load("fig4-right"), E.Bounds()) is not None


def test_correct_program_needs_no_iteration():
    r = G.repair(load("fig3a"))
    assert r.fixed and r.iterations == 0 and r.transformations == []


def test_budget_exhausted():
    r = G.repair(load("ex1"), G.RepairConfig(max_iterations=1))
    assert r.status == "budget-exhausted" and r.iterations == 1


def test_unknown_when_bounds_are_too_small():
    r = G.repair(load("paper1"), G.RepairConfig(mode="bad-only", bounds=E.Bounds(max_steps=3)))
    assert r.status == "unknown"


def test_config_validation():
    with pytest.raises(ValueError):
        G.RepairConfig(mode="fast")
    with pytest.raises(ValueError):
        G.RepairConfig(heuristic="ce9")
    with pytest.raises(ValueError):
        G.RepairConfig(max_iterations=0)


def test_history_records_learning_and_fixing():
    r = G.repair(load("paper1"))
    kinds = [h.kind for h in r.history]
    assert kinds.count("good") == r.good_analyzed > 0
    assert kinds[-1] == "bad"
    assert set(r.history[-1].as_dict()) == {
        "kind", "trace", "constraint", "transformations", "cycle", "regressions", "notes"}


def test_constraint_strengthens_monotonically():
    r = G.repair(load("ex4"), G.RepairConfig(mode="bad-only"))
    phis = [C.parse_constraint(h.constraint) for h in r.history if h.kind == "bad"]
    acc = C.TRUE
    for phi in phis:
        new = C.conj(acc, phi)
        assert C.implies(new, acc)
        acc = new
    assert P.satisfies(r.program, r.constraint)


def test_seeded_runs_are_deterministic():
    cfg = G.RepairConfig(seed=7, max_good=3)
    r1, r2 = G.repair(load("paper1"), cfg), G.repair(load("paper1"), cfg)
    assert [h.as_dict() for h in r1.history] == [h.as_dict() for h in r2.history]
    assert r1.fixed


def test_ex_regr_needs_the_sound_fallback():
    p = load("ex-regr")
    unsound = G.repair(p)
    assert unsound.fixed and not unsound.regression_free
    sound = G.repair(p, G.RepairConfig(sound_fallback=True))
    assert sound.fixed and sound.regression_free and sound.iterations == 1


def test_wait_notify_repair():
    r = G.repair(load("fig4-right"), G.RepairConfig(allow_wait_notify=True))
    assert r.fixed and C.to_text(r.constraint) == "B -> 1"
