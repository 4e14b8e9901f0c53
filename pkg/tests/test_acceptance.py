"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line."""
import math
import time
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from scipy.stats import chisquare

from conftest import record
from randcsp import AtomicFormula, Hypergraph, gen_ksat, gen_uniform_hypergraph
from randcsp.counting import Sampler, count
from randcsp.coupling import check_tree_invariants, couple
from randcsp.csp import build_graphs, evaluate
from randcsp.generators import make_rng
from randcsp.geometry import (check_loose, far_set, looseness_process, nonreconstruction_tv,
                              replica_symmetry_gap)
from randcsp.lp import (build_coupling_tree, build_lp, check_solution, estimate_ratio, node_identity_violations,
                        true_solution, truth_vector)
from randcsp.oracle import Event, check_hss_bound, check_lll, count_exact, get_oracle, solutions
from randcsp.structure import check_edge_expansion, hd, identify_bad

CLAUSE = AtomicFormula(3, 2, (((0, 1, 2), (0, 0, 0)),))


def _line(n, ok, detail):
    record(n, ok, detail)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="module")
def trees(acceptance_corpus):
    out = []
    for f in acceptance_corpus:
        for c0 in range(f.m):
            for M in (2, 3):
                out.append((f, c0, M, build_coupling_tree(f, c0, M)))
    return out


def test_criterion_01_exact_lp_feasibility(trees):
    t0 = time.perf_counter()
    bad = []
    for f, c0, M, tree in trees:
        truth = true_solution(tree)
        lp = build_lp(tree, truth.ratio, truth.ratio)
        viol = check_solution(lp, truth_vector(truth), exact=True)
        if viol:
            bad.append((f.meta.get("n"), c0, M, viol[:3]))
    elapsed = time.perf_counter() - t0
    ok = not bad and elapsed < 120
    _line(1, ok, f"{len(trees)} trees, {len(bad)} with violated rows, {elapsed:.1f}s")
    assert not bad
    assert elapsed < 120


def test_criterion_02_node_identity(trees):
    bad = sum(len(node_identity_violations(tree, true_solution(tree))) for _, _, _, tree in trees)
    nodes = sum(tree.size for *_, tree in trees)
    _line(2, bad == 0, f"{nodes} nodes checked, {bad} identity failures")
    assert bad == 0


def test_criterion_03_ratio_window_soundness(acceptance_corpus):
    misses = []
    runs = 0
    for i, f in enumerate(acceptance_corpus):
        o = get_oracle(f)
        truth = Fraction(o.omega(exclude=f.m - 1).bit_count(), o.omega().bit_count())
        for M in (2, 3):
            r = estimate_ratio(f, f.m - 1, 0.05, M)
            runs += 1
            lo, hi = r.inflated
            if not (lo <= truth <= hi):
                misses.append((i, M, float(truth), r.r_minus, r.r_plus))
    _line(3, not misses, f"{runs} windows, {len(misses)} miss the true ratio {misses[:3]}")
    assert not misses


def test_criterion_04_closed_form_ratio():
    r = estimate_ratio(CLAUSE, 0, 0.01, 2)
    target = Fraction(8, 7)
    inflated_ok = r.inflated[0] <= target <= r.inflated[1]
    big = estimate_ratio(CLAUSE, 0, 0.01, 8)
    raw_ok = (not big.tree.has_truncation) and big.r_minus <= target <= big.r_plus
    ok = inflated_ok and raw_ok and r.r_plus / r.r_minus <= 1.01 + 1e-12
    _line(4, ok, f"inflated window {r.inflated}, untruncated window ({big.r_minus}, {big.r_plus}) vs 8/7")
    assert ok


def test_criterion_05_counting_accuracy(acceptance_corpus):
    errs, slow = [], 0
    for f in acceptance_corpus[:30]:
        t0 = time.perf_counter()
        est = count(f, 0.25).estimate
        slow += time.perf_counter() - t0 > 300
        errs.append(abs(est / count_exact(f) - 1))
    worst = max(errs)
    ok = worst <= 0.25 and slow == 0
    _line(5, ok, f"30 instances, worst |Z^/Z - 1| = {worst:.4f}")
    assert ok


def _tv_with_sigma(counts, target, runs, rng, boots=200):
    keys = sorted(target)
    p = np.array([target[k] for k in keys])
    emp = np.array([counts.get(k, 0) for k in keys]) / runs
    stray = sum(c for k, c in counts.items() if k not in target) / runs
    tv = 0.5 * (np.abs(emp - p).sum() + stray)
    probs = np.append(emp, stray)
    sims = rng.multinomial(runs, probs, size=boots) / runs
    tvs = 0.5 * (np.abs(sims[:, :-1] - p).sum(axis=1) + sims[:, -1])
    return tv, tvs.std()


def _small_instances():
    out = [CLAUSE]
    s = 0
    while len(out) < 3:
        f = gen_ksat(3, 6, 6, 500 + s)
        s += 1
        if 0 < count_exact(f) <= 50:
            out.append(f)
    return out


def test_criterion_06_sampler_tv():
    rng = make_rng(6)
    rows = []
    for f in _small_instances():
        S = [tuple(int(a) for a in row) for row in solutions(f)]
        sampler = Sampler(f, 0.2)
        counts = Counter(sampler.run(rng) for _ in range(100_000))
        tv, sd = _tv_with_sigma(counts, {s: 1 / len(S) for s in S}, 100_000, rng)
        rows.append((len(S), tv, sd, tv <= 0.2 + 3 * sd))
    ok = all(r[3] for r in rows)
    _line(6, ok, "; ".join(f"|Omega|={z} TV={tv:.4f} sd={sd:.4f}" for z, tv, sd, _ in rows))
    assert ok


@pytest.fixture(scope="module")
def coupling_runs(acceptance_corpus):
    chosen = sorted(acceptance_corpus, key=count_exact)[:5]
    out = []
    for j, f in enumerate(chosen):
        c0 = f.m - 1
        rng = make_rng(70 + j)
        runs = [couple(f, c0, rng) for _ in range(100_000)]
        out.append((f, c0, runs))
    return out


def test_criterion_07_coupling_marginals(coupling_runs):
    pvals = []
    for f, c0, runs in coupling_runs:
        o = get_oracle(f)
        for mask, attr in ((o.omega(exclude=c0), "X"), (o.omega(), "Y")):
            support = [o.decode(i) for i in o.indices(mask)]
            cnt = Counter(getattr(r, attr) for r in runs)
            stray = sum(c for x, c in cnt.items() if x not in set(support))
            obs = [cnt.get(x, 0) for x in support]
            p = chisquare(obs).pvalue if stray == 0 else 0.0
            pvals.append(p)
    ok = all(p >= 0.01 for p in pvals)
    _line(7, ok, f"min p-value {min(pvals):.4f} over {len(pvals)} tests")
    assert ok


def test_criterion_08_hamming_bound(coupling_runs):
    total = bad = 0
    for f, _, runs in coupling_runs:
        for r in runs:
            total += 1
            bad += r.hamming > f.k * len(r.tree.variables())
    _line(8, bad == 0, f"{total} runs, {bad} exceed k*|V(T)|")
    assert bad == 0


def test_criterion_09_witness_tree_invariants(coupling_runs):
    total = bad = 0
    for f, _, runs in coupling_runs:
        for r in runs:
            total += 1
            bad += bool(check_tree_invariants(f, r.log, r.tree))
    _line(9, bad == 0, f"{total} runs, {bad} with broken invariants")
    assert bad == 0


def test_criterion_10_tree_shape(trees):
    bad = 0
    for f, c0, M, tree in trees:
        dmax = build_graphs(f).max_degree
        bad += tree.max_depth > M * dmax * f.k + 1
        bad += max(tree.nchild) > f.q ** f.k + 1
    _line(10, bad == 0, f"{len(trees)} trees, {bad} shape violations")
    assert bad == 0


def test_criterion_11_identify_bad_order_invariance():
    rng = make_rng(11)
    bad = nontrivial = 0
    for h in range(20):
        H = gen_uniform_hypergraph(3, 14, 10, 1100 + h)
        V0 = list(range(H.n))
        ref = identify_bad(H, V0, 0.34, 1.0, 3.0, k=3)
        nontrivial += bool(ref.ebad)
        for _ in range(20):
            order = rng.permutation(H.m).tolist()
            got = identify_bad(H, V0, 0.34, 1.0, 3.0, k=3, order=order)
            bad += (got.vbad, got.ebad) != (ref.vbad, ref.ebad)
    _line(11, bad == 0, f"400 orders, {bad} disagreements, {nontrivial}/20 hypergraphs with bad edges")
    assert bad == 0


def test_criterion_12_structural_witnesses():
    disjoint = Hypergraph(9, ((0, 1, 2), (3, 4, 5), (6, 7, 8)))
    a = all(check_edge_expansion(disjoint, eta, 1.0, 3, k=3)["holds"] for eta in (0.0, 0.1, 0.5, 0.9))
    pair = Hypergraph(4, ((0, 1, 2), (1, 2, 3)))
    rep = check_edge_expansion(pair, 0.1, 1.0, 2, k=3)
    b = rep["holds"] is False and rep["ell"] == 2 and rep["union"] == 4
    p1, alpha = 2.0, 1.5
    star = Hypergraph(9, tuple((0, 2 * i + 1, 2 * i + 2) for i in range(4)))
    c = hd(star, range(star.n), p1, alpha) == frozenset({0})
    ok = a and b and c
    _line(12, ok, f"disjoint expands={a}, shared pair violates at l=2={b}, star flagged={c}")
    assert ok


def _lll_instances(limit=5):
    x = math.e / 8
    out, s = [], 0
    while len(out) < limit and s < 5000:
        f = gen_ksat(3, 10, 2 + s % 3, 1300 + s)
        s += 1
        if f.k == 3 and count_exact(f) and check_lll(f, x).holds:
            out.append(f)
    return out


def test_criterion_13_hss_bound():
    x = math.e / 8
    rng = make_rng(13)
    insts = _lll_instances()
    checks = bad = 0
    for f in insts:
        for _ in range(100):
            size = int(rng.integers(1, 4))
            vbl = tuple(sorted(rng.choice(f.n, size=size, replace=False).tolist()))
            allc = [tuple((i >> j) & 1 for j in range(size)) for i in range(2 ** size)]
            pick = [c for c in allc if rng.random() < 0.5] or [allc[0]]
            checks += 1
            bad += not check_hss_bound(f, x, Event(vbl, frozenset(pick))).holds
    ok = bad == 0 and insts
    _line(13, ok, f"{len(insts)} instances, {checks} events, {bad} bound failures")
    assert ok


def test_criterion_14_looseness_coherence(acceptance_corpus):
    rng = make_rng(14)
    runs = succ = bad = 0
    M = 3
    while runs < 1000:
        f = acceptance_corpus[runs % len(acceptance_corpus)]
        S = solutions(f)
        sigma = tuple(int(a) for a in S[rng.integers(len(S))])
        v = int(rng.integers(f.n))
        try:
            res = looseness_process(f, sigma, v, M, rng)
        except Exception:
            runs += 1
            continue
        runs += 1
        if res.success:
            succ += 1
            out = res.sigma_out
            d = sum(a != b for a, b in zip(out, sigma))
            good = evaluate(f, out) and out[v] != sigma[v] and d <= f.k * M
            good &= check_loose(f, sigma, v, f.k * M).loose
            bad += not good
    ok = bad == 0 and succ > 0
    _line(14, ok, f"{runs} runs, {succ} successes, {bad} incoherent")
    assert ok


def test_criterion_15_geometry_zeros():
    f = AtomicFormula(6, 2, (((0, 1, 2), (0, 0, 0)), ((1, 2), (1, 1)), ((3, 4), (0, 1)), ((4, 5), (1, 0))))
    rg = replica_symmetry_gap(f)
    cross = [rg.pairs[(u, v)] for u in range(3) for v in range(3, 6)]
    a = all(g == 0 for g in cross) and any(g > 0 for g in rg.pairs.values())
    b = all(nonreconstruction_tv(f, v, r) == 0 for v in range(6) for r in range(1, 8)
            if not [u for u in far_set(f, v, r) if u != v])
    path = AtomicFormula(5, 2, (((0, 1, 2), (0, 0, 0)), ((2, 3, 4), (1, 1, 1))))
    c = nonreconstruction_tv(path, 0, 10) == 0 and not far_set(path, 0, 10)
    ok = a and b and c
    _line(15, ok, f"cross-component gaps zero={a}, empty far set gives zero TV={b and c}")
    assert ok
