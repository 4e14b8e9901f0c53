import math
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy.stats import chisquare

from randcsp import AtomicFormula, Unsatisfiable, ZeroDenominator, evaluate, gen_ksat
from randcsp.counting import (DynamicSampler, PathWalker, Sampler, count, counting_M, dynamic_sample_step,
                              random_path, sample, sampler_M)
from randcsp.generators import make_rng
from randcsp.lp import INVALID, build_coupling_tree, iter_node_states, true_solution, truth_vector
from randcsp.oracle import count_exact, get_oracle, solutions

CLAUSE = AtomicFormula(3, 2, (((0, 1, 2), (0, 0, 0)),))


def test_truncation_depths():
    assert counting_M(6, 0.25) == 1 + math.ceil(math.log2(96))
    assert sampler_M(0.2) == 1 + math.ceil(math.log2(20))
    for m, eps in [(4, 1.0), (6, 0.25), (3, 0.1)]:
        assert 2 * 2.0 ** -counting_M(m, eps) <= eps / (4 * m)


def test_count_trivial_and_closed_form():
    assert count(AtomicFormula(4, 3, ()), 0.1).estimate == 81
    r = count(CLAUSE, 0.25)
    assert abs(r.estimate / 7 - 1) <= 0.25
    lo, hi = r.interval
    assert lo <= 7 <= hi
    with pytest.raises(Unsatisfiable):
        count(AtomicFormula(1, 2, (((0,), (0,)), ((0,), (1,)))), 0.25)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_telescoping_identity_with_exact_ratios(seed):
    f = gen_ksat(3, 7, 4, seed)
    Z = count_exact(f)
    assume(Z > 0 and f.m >= 1)
    prod = Fraction(1)
    for i in range(1, f.m + 1):
        tree = build_coupling_tree(f.subformula(range(i)), i - 1, 1)
        assert true_solution(tree).ratio >= 1
        prod /= true_solution(tree).ratio
    assert f.q ** f.n * prod == Z


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_count_accuracy(seed):
    f = gen_ksat(3, 8, 5, seed)
    Z = count_exact(f)
    assume(Z > 0 and f.m >= 1)
    r = count(f, 0.25)
    assert abs(r.estimate / Z - 1) <= 0.25
    assert len(r.steps) == f.m


def _walk_law(f, c0, M, walks, seed):
    tree = build_coupling_tree(f, c0, M)
    truth = true_solution(tree)
    walker = PathWalker(tree, truth_vector(truth))
    o = get_oracle(f)
    rng = make_rng(seed)
    mask = o.omega(exclude=c0)
    leaves = Counter()
    for _ in range(walks):
        x = o.decode(o.sample_index(mask, rng))
        leaf, _ = walker.walk(x, rng)
        leaves[leaf] += 1
    return tree, truth, leaves


def test_path_law_matches_truth():
    f = gen_ksat(3, 7, 5, 12)
    tree, truth, leaves = _walk_law(f, f.m - 1, 2, 30000, 1)
    expected = {i: truth.pX[i] * tree.count_E[i] / tree.z_minus for i in tree.leaves()}
    assert sum(expected.values()) == 1
    support = [i for i, p in expected.items() if p > 0]
    assert set(leaves) <= set(support)
    obs = [leaves.get(i, 0) for i in support]
    exp = [float(expected[i]) * 30000 for i in support]
    assert chisquare(obs, exp).pvalue > 0.001


def test_walks_respect_consistency():
    f = gen_ksat(3, 6, 4, 5)
    tree = build_coupling_tree(f, f.m - 1, 3)
    states = dict(iter_node_states(tree))
    walker = PathWalker(tree, truth_vector(true_solution(tree)))
    o = get_oracle(f)
    rng = make_rng(2)
    for _ in range(2000):
        x = o.decode(o.sample_index(o.omega(exclude=f.m - 1), rng))
        leaf, _ = walker.walk(x, rng)
        assert tree.kind[leaf] != INVALID
        assert all(x[v] == a for v, a in states[leaf].sigma.items())


def test_zero_denominator():
    tree = build_coupling_tree(CLAUSE, 0, 3)
    with pytest.raises(ZeroDenominator):
        random_path(tree, [0] * (2 * tree.size), (1, 1, 1), 0)


def test_duplicate_constraint_step_is_identity():
    f = AtomicFormula(3, 2, (((0, 1, 2), (0, 0, 0)), ((0, 1, 2), (0, 0, 0))))
    for x in [(1, 0, 0), (0, 1, 1), (1, 1, 1)]:
        assert dynamic_sample_step(f, 1, x, 0.2, 3) == x


def test_single_step_law():
    s = DynamicSampler(CLAUSE, 0, 0.2)
    assert s.ratio.r_minus >= (4 + 0.2) / (4 + 0.4) * s.ratio.r_plus * (1 - 1e-12)
    rng = make_rng(5)
    cnt = Counter(s.step(tuple(int(a) for a in rng.integers(0, 2, 3)), rng) for _ in range(20000))
    sols = [tuple(int(a) for a in r) for r in solutions(CLAUSE)]
    tv = 0.5 * sum(abs(cnt.get(x, 0) / 20000 - 1 / 7) for x in sols)
    assert set(cnt) <= set(sols)
    assert tv <= 0.2


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_sampler_outputs_satisfy(seed):
    f = gen_ksat(3, 7, 4, seed)
    assume(count_exact(f) > 0 and f.m >= 1)
    s = Sampler(f, 0.3)
    rng = make_rng(seed)
    for _ in range(200):
        assert evaluate(f, s.run(rng))


def test_sample_unconstrained_and_determinism():
    f = AtomicFormula(3, 2, ())
    rng = make_rng(0)
    cnt = Counter(Sampler(f, 0.1).run(rng) for _ in range(4000))
    assert len(cnt) == 8
    g = gen_ksat(3, 6, 4, 1)
    assert sample(g, 0.2, 9) == sample(g, 0.2, 9)
