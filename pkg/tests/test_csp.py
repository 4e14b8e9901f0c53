from itertools import product

import pytest
from hypothesis import given, strategies as st

from randcsp import (AtomicFormula, OverlapError, PartialAssignment, PinningViolation, SATISFIED, VIOLATED,
                     build_graphs, concat, evaluate, pin_constraint, pin_formula)
from randcsp.csp import constraint_order, pin_set, satisfies, variable_degrees
from strategies import assignments, formulas


def test_pin_examples():
    f = AtomicFormula(3, 2, (((0, 1, 2), (0, 0, 0)),))
    c = f.constraints[0]
    assert pin_constraint(c, {0: 1}) is SATISFIED
    r = pin_constraint(c, {0: 0})
    assert r.vbl == (1, 2) and r.forbidden == (0, 0) and r.origin == 0
    assert pin_constraint(c, {0: 0, 1: 0, 2: 0}) is VIOLATED
    with pytest.raises(PinningViolation):
        pin_formula(f, {0: 0, 1: 0, 2: 0})


def test_partial_assignment_overlap():
    a = PartialAssignment({0: 1})
    assert a.extend([1], [0]) == {0: 1, 1: 0}
    with pytest.raises(OverlapError):
        a.extend([0], [0])
    with pytest.raises(OverlapError):
        concat({0: 1}, {0: 0})
    assert concat({0: 1}, {2: 0}).domain == frozenset({0, 2})
    assert hash(a) == hash(PartialAssignment({0: 1}))


@pytest.mark.parametrize("cons", [
    (((0, 0), (1, 1)),),
    (((0, 5), (1, 1)),),
    (((0, 1), (1, 2)),),
    (((0, 1), (1,)),),
])
def test_formula_validation(cons):
    with pytest.raises(ValueError):
        AtomicFormula(3, 2, cons)


def test_ids_are_reindexed():
    f = AtomicFormula(4, 2, (((1, 2), (0, 1)), ((2, 3), (1, 1))))
    assert [c.id for c in f.constraints] == [0, 1]
    sub = f.subformula([1])
    assert sub.constraints[0].vbl == (2, 3) and sub.constraints[0].id == 0
    assert f.k == 2 and f.density == 0.5


def test_graphs_and_degrees():
    f = AtomicFormula(5, 2, (((0, 1), (0, 0)), ((1, 2), (0, 0)), ((3, 4), (0, 0))))
    g = build_graphs(f)
    assert g.neighbors(0) == {1} and g.neighbors(2) == frozenset()
    assert g.max_degree == 1
    assert variable_degrees(f) == [1, 2, 1, 1, 1]


@given(formulas(), st.data())
def test_pinning_preserves_satisfaction(f, data):
    """x agrees with sigma and satisfies C iff it satisfies the pinned set."""
    x = data.draw(assignments(f.n, f.q))
    dom = data.draw(st.lists(st.integers(0, f.n - 1), unique=True))
    sigma = {v: x[v] for v in dom}
    pinned, violated = pin_set(f.constraints, sigma)
    if violated:
        assert not evaluate(f, x)
    else:
        assert evaluate(f, x) == all(satisfies(x, c) for c in pinned)
        assert all(not set(c.vbl) & set(dom) for c in pinned)


@given(formulas(min_m=1), st.data())
def test_pinning_composes(f, data):
    x = data.draw(assignments(f.n, f.q))
    a = data.draw(st.lists(st.integers(0, f.n - 1), unique=True))
    b = [v for v in range(f.n) if v not in a and data.draw(st.booleans())]
    s1, s2 = {v: x[v] for v in a}, {v: x[v] for v in b}
    p1, v1 = pin_set(f.constraints, s1)
    p12, v12 = pin_set(p1, s2)
    both, vb = pin_set(f.constraints, {**s1, **s2})
    assert (v1 or v12) == vb
    if not vb:
        assert p12 == both


@given(formulas(min_m=2))
def test_constraint_order_is_total(f):
    cs = [c.pinned() for c in f.constraints]
    for a, b in product(cs, repeat=2):
        assert constraint_order(a, b) == -constraint_order(b, a)
        assert (constraint_order(a, b) == 0) == (a == b)
