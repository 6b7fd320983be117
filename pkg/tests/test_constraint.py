import pytest
from hypothesis import given, settings, strategies as st

from conrepair import constraint as C

O, A, S = C.Ordering, C.Atomicity, C.Scheduling


def test_atom_text():
    assert C.to_text(O("1", "2")) == "1 <= 2"
    assert C.to_text(A("A", "B")) == "[A;B]"
    assert C.to_text(S("B", "1")) == "B -> 1"


def test_canonical_order_is_natural():
    c = C.conj(O("C", "A"), O("1", "2"))
    assert C.to_text(c) == "(1 <= 2) & (C <= A)"
    assert sorted(["10", "2", "B", "1"], key=C.label_key) == ["1", "2", "10", "B"]


def test_constants_and_flattening():
    assert C.conj() == C.TRUE and C.disj() == C.FALSE
    assert C.conj(C.TRUE, O("1", "2")) == O("1", "2")
    assert C.conj(C.FALSE, O("1", "2")) == C.FALSE
    assert C.disj(C.TRUE, O("1", "2")) == C.TRUE
    assert C.conj(C.conj(O("1", "2"), O("2", "3")), O("3", "4")).args == {
        O("1", "2"), O("2", "3"), O("3", "4")}


def test_absorption():
    x, y, z = O("1", "2"), O("A", "B"), O("3", "4")
    assert C.conj(x, C.disj(x, y)) == x
    assert C.disj(x, C.conj(x, y)) == x
    # a conjunction of plain atoms absorbs a disjunction one of whose arms it implies
    assert C.conj(x, y, C.disj(C.conj(x, y), z)) == C.conj(x, y)


def test_implication_and_equivalence():
    x, y = O("1", "2"), O("A", "B")
    assert C.implies(C.conj(x, y), x)
    assert not C.implies(x, C.conj(x, y))
    assert C.equivalent(C.disj(x, C.conj(x, y)), x)
    assert C.implies(C.FALSE, x) and C.implies(x, C.TRUE)


def test_truth_table_limit():
    many = C.conj(*[O(str(i), str(i + 1)) for i in range(20)])
    with pytest.raises(ValueError):
        C.implies(many, C.TRUE)


def test_parse_errors():
    for bad in ["1 <=", "1 ~ 2", "(1 <= 2", "1 <= 2 2"]:
        with pytest.raises(ValueError):
            C.parse_constraint(bad)


labels = st.sampled_from(["1", "2", "3", "A", "B", "3w"])
atoms = st.one_of(
    st.builds(O, labels, labels), st.builds(A, labels, labels), st.builds(S, labels, labels))
constraints = st.recursive(
    atoms | st.sampled_from([C.TRUE, C.FALSE]),
    lambda inner: st.one_of(
        st.lists(inner, min_size=1, max_size=3).map(lambda cs: C.conj(*cs)),
        st.lists(inner, min_size=1, max_size=3).map(lambda cs: C.disj(*cs))),
    max_leaves=8)


@settings(max_examples=200, deadline=None)
@given(constraints)
def test_text_round_trip(c):
    text = C.to_text(c)
    assert C.parse_constraint(text) == c
    assert C.to_text(C.parse_constraint(text)) == text


@settings(max_examples=100, deadline=None)
@given(constraints, constraints)
def test_conj_is_stronger(c1, c2):
    both = C.conj(c1, c2)
    assert C.implies(both, c1) and C.implies(both, c2)
    assert C.implies(c1, C.disj(c1, c2))
