from fractions import Fraction

import pytest
from hypothesis import assume, given, settings, strategies as st

from randcsp import AtomicFormula, gen_ksat
from randcsp.lp import (COUP, INTERNAL, INVALID, build_coupling_tree, build_lp, check_solution, estimate_ratio,
                        export_lp, iter_node_states, lp_feasible, node_identity_violations, true_solution,
                        truncation_bounds, truncation_mass, truth_vector)
from randcsp.csp import pin_set
from randcsp.oracle import count_exact
from strategies import formulas

CLAUSE = AtomicFormula(3, 2, (((0, 1, 2), (0, 0, 0)),))


def _tree(f, M, data):
    assume(f.m >= 1 and count_exact(f) > 0)
    c0 = data.draw(st.integers(0, f.m - 1))
    return build_coupling_tree(f, c0, M, max_nodes=20000)


@settings(max_examples=50, deadline=None)
@given(formulas(max_n=5, max_m=4, min_m=1), st.integers(1, 3), st.data())
def test_true_solution_is_exactly_feasible(f, M, data):
    tree = _tree(f, M, data)
    truth = true_solution(tree)
    assert truth.ratio >= 1
    assert check_solution(build_lp(tree, truth.ratio, truth.ratio), truth_vector(truth)) == []
    assert node_identity_violations(tree, truth) == []


@settings(max_examples=40, deadline=None)
@given(formulas(max_n=5, max_m=4, min_m=1), st.integers(1, 3), st.data())
def test_tree_shape(f, M, data):
    tree = _tree(f, M, data)
    assert tree.max_depth <= tree.depth_bound
    for i in range(tree.size):
        if tree.kind[i] == INTERNAL:
            assert tree.nchild[i] == f.q ** len(tree.cons[i].vbl) + 1
            assert all(tree.parent[j] == i for j in tree.children(i))
        else:
            assert tree.nchild[i] == 0
    for i, st_ in iter_node_states(tree):
        if tree.kind[i] == COUP:
            assert pin_set(st_.E, st_.sigma) == pin_set(st_.F, st_.tau)


@settings(max_examples=25, deadline=None)
@given(formulas(max_n=5, max_m=3, min_m=1, qs=(2,)), st.data())
def test_exact_mode_certificates(f, data):
    tree = _tree(f, 8, data)
    assume(not tree.has_truncation)
    truth = true_solution(tree)
    ok = lp_feasible(build_lp(tree, truth.ratio, truth.ratio), "exact")
    assert ok.feasible and ok.exact
    assert check_solution(build_lp(tree, truth.ratio, truth.ratio), ok.values) == []
    # without truncation the LP pins the ratio, so a window excluding it is infeasible
    bad = lp_feasible(build_lp(tree, truth.ratio * Fraction(11, 10), None), "exact")
    assert not bad.feasible and bad.certificate is not None


def test_closed_form_ratio():
    r = estimate_ratio(CLAUSE, 0, 0.01, 8)
    assert r.exact_bracket
    assert r.r_minus <= 8 / 7 <= r.r_plus
    assert r.r_plus / r.r_minus == pytest.approx(1.01)
    e = estimate_ratio(CLAUSE, 0, 0.01, 8, mode="exact")
    assert (e.r_minus, e.r_plus) == (r.r_minus, r.r_plus)


def test_duplicate_constraint_ratio_one():
    f = AtomicFormula(3, 2, (((0, 1, 2), (0, 0, 0)), ((0, 1, 2), (0, 0, 0))))
    tree = build_coupling_tree(f, 1, 3)
    assert true_solution(tree).ratio == 1
    r = estimate_ratio(f, 1, 0.05, 3)
    assert r.r_minus <= 1 <= r.r_plus


def test_truncation_bounds_modes():
    f = gen_ksat(3, 8, 6, 3)
    tree = build_coupling_tree(f, f.m - 1, 1)
    assert tree.has_truncation
    b = truncation_bounds(tree, "auto")
    assert b and all(v == 1 for v in b.values())
    with pytest.raises(ValueError):
        truncation_bounds(tree, "strict")
    sx, sy = truncation_mass(tree)
    assert 0 <= sx <= 1 and 0 <= sy <= 1


def test_invalid_leaves_have_zero_truth():
    f = gen_ksat(3, 7, 5, 4)
    tree = build_coupling_tree(f, f.m - 1, 3)
    truth = true_solution(tree)
    for i in tree.leaves(INVALID):
        assert (tree.viol_E[i] and tree.count_E[i] == 0) or (tree.viol_F[i] and tree.count_F[i] == 0)
        assert truth.pX[i] * tree.count_E[i] == 0 or truth.pY[i] * tree.count_F[i] == 0


def test_export_lp():
    tree = build_coupling_tree(CLAUSE, 0, 3)
    text = export_lp(build_lp(tree, 1, 2))
    assert text.startswith("\\") and "Subject To" in text and text.rstrip().endswith("End")
    assert "x0" in text and "y0" in text


def test_bad_window_rejected():
    tree = build_coupling_tree(CLAUSE, 0, 3)
    with pytest.raises(ValueError):
        build_lp(tree, 2, 1)
