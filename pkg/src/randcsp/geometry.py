"""Exact solution-space estimators: replica symmetry gap, non-reconstruction TV, looseness.

All probabilities come from integer solution counts, so zeros are exact zeros.
"""
from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations

import numpy as np

from .coupling import ProcessOutcome, run_truncated
from .csp import AtomicFormula, evaluate, pin_set
from .errors import EmptySupport, Unsatisfiable
from .generators import make_rng
from .oracle import DEFAULT_BUDGET, get_oracle, solutions


def _solutions(formula: AtomicFormula, budget: int) -> np.ndarray:
    S = solutions(formula, budget)
    if len(S) == 0:
        raise Unsatisfiable("formula has no satisfying assignment")
    return S


def _pair_gap(S: np.ndarray, v1: int, v2: int, q: int) -> Fraction:
    Z = len(S)
    a_vals = [1] if q == 2 else range(q)
    best = Fraction(0)
    for a in a_vals:
        ia = S[:, v1] == a
        na = int(ia.sum())
        for b in a_vals:
            ib = S[:, v2] == b
            gap = Fraction(abs(Z * int((ia & ib).sum()) - na * int(ib.sum())), Z * Z)
            best = max(best, gap)
    return best


@dataclass
class ReplicaGap:
    max: Fraction
    mean: Fraction
    pairs: dict
    diagonal: dict

    def as_dict(self) -> dict:
        return {"max": float(self.max), "mean": float(self.mean),
                "pairs": [[u, v, float(g)] for (u, v), g in sorted(self.pairs.items())],
                "diagonal": {v: float(g) for v, g in self.diagonal.items()}}


def replica_symmetry_gap(formula: AtomicFormula, budget: int = DEFAULT_BUDGET) -> ReplicaGap:
    """|Pr[s(v1)=s(v2)=1] - Pr[s(v1)=1]Pr[s(v2)=1]| under the uniform solution law.

    Value 1 plays the role of True.  For q > 2 the maximum over value pairs is used.
    Diagonal entries p(1-p) are reported separately and kept out of the aggregates.
    """
    S = _solutions(formula, budget)
    n, q = formula.n, formula.q
    pairs = {(u, v): _pair_gap(S, u, v, q) for u, v in combinations(range(n), 2)}
    diagonal = {v: _pair_gap(S, v, v, q) for v in range(n)}
    vals = list(pairs.values())
    mx = max(vals, default=Fraction(0))
    mean = sum(vals, Fraction(0)) / len(vals) if vals else Fraction(0)
    return ReplicaGap(mx, mean, pairs, diagonal)


def variable_distances(formula: AtomicFormula, v: int) -> dict:
    """BFS distances from v in the incidence hypergraph; unreachable variables are absent."""
    by_var = [[] for _ in range(formula.n)]
    for c in formula.constraints:
        for u in c.vbl:
            by_var[u].append(c.vbl)
    dist = {v: 0}
    dq = deque([v])
    while dq:
        u = dq.popleft()
        for vbl in by_var[u]:
            for w in vbl:
                if w not in dist:
                    dist[w] = dist[u] + 1
                    dq.append(w)
    return dist


def far_set(formula: AtomicFormula, v: int, r: int) -> tuple:
    """Variables at hypergraph distance at least r from v (other components count as infinitely far)."""
    dist = variable_distances(formula, v)
    return tuple(u for u in range(formula.n) if dist.get(u, float("inf")) >= r)


def nonreconstruction_tv(formula: AtomicFormula, v: int, r: int, budget: int = DEFAULT_BUDGET) -> Fraction:
    """TV between the joint law of (s(v), s(far set)) and the product of its marginals."""
    far = [u for u in far_set(formula, v, r) if u != v]
    if not far:
        return Fraction(0)
    S = _solutions(formula, budget)
    Z = len(S)
    joint = Counter((int(row[v]), tuple(int(x) for x in row[far])) for row in S)
    na = Counter(a for a, _ in joint.elements())
    nb = Counter(b for _, b in joint.elements())
    total = 0
    for a, ca in na.items():
        for b, cb in nb.items():
            total += abs(Z * joint.get((a, b), 0) - ca * cb)
    return Fraction(total, 2 * Z * Z)


@dataclass
class LooseVerdict:
    loose: bool
    distance: float
    witness: tuple | None


def check_loose(formula: AtomicFormula, sigma, v: int, M: int, budget: int = DEFAULT_BUDGET) -> LooseVerdict:
    """Nearest solution that changes v, and whether it lies within Hamming distance M."""
    sigma = np.asarray(sigma)
    if not evaluate(formula, tuple(int(a) for a in sigma)):
        raise ValueError("sigma is not a solution")
    S = _solutions(formula, budget)
    cand = S[S[:, v] != sigma[v]]
    if len(cand) == 0:
        return LooseVerdict(False, float("inf"), None)
    d = (cand != sigma).sum(axis=1)
    i = int(np.argmin(d))
    return LooseVerdict(bool(d[i] <= M), int(d[i]), tuple(int(a) for a in cand[i]))


def flip_distances(formula: AtomicFormula, sigma, budget: int = DEFAULT_BUDGET) -> list:
    """Minimal flip distance for every variable (inf when the variable is frozen)."""
    return [check_loose(formula, sigma, v, 0, budget).distance for v in range(formula.n)]


@dataclass
class LoosenessOutcome:
    sigma_out: tuple
    success: bool
    x: int
    process: ProcessOutcome

    @property
    def hamming(self) -> int:
        return sum(a != b for a, b in zip(self.sigma_out, self.process.X))


def looseness_process(formula: AtomicFormula, sigma_in, v: int, M: int, seed,
                      budget: int = DEFAULT_BUDGET) -> LoosenessOutcome:
    """Truncated process started from v=sigma_in(v) against v=x, with X = sigma_in and Y drawn given v=x."""
    sigma_in = tuple(int(a) for a in sigma_in)
    if not evaluate(formula, sigma_in):
        raise Unsatisfiable("sigma_in is not a solution")
    o = get_oracle(formula, budget)
    omega = o.omega()
    x = next((a for a in range(formula.q) if a != sigma_in[v] and omega & o.lit(v, a)), None)
    if x is None:
        raise EmptySupport(f"v{v} is frozen to {sigma_in[v]}")
    rng = make_rng(seed)
    Y = o.decode(o.sample_index(omega & o.lit(v, x), rng))
    Es, _ = pin_set(formula.constraints, {v: sigma_in[v]})
    Ft, _ = pin_set(formula.constraints, {v: x})
    proc = run_truncated(formula, Es, Ft, {v: sigma_in[v]}, {v: x}, sigma_in, Y, M)
    if proc.truncated or not proc.coupled:
        return LoosenessOutcome(sigma_in, False, x, proc)
    out = list(sigma_in)
    for u, a in proc.tau.items():
        out[u] = a
    return LoosenessOutcome(tuple(out), True, x, proc)


def geometry_report(formula: AtomicFormula, radii=(1, 2, 3), M: int = 3, seed=0,
                    budget: int = DEFAULT_BUDGET) -> dict:
    rg = replica_symmetry_gap(formula, budget)
    nonrecon = [{"v": v, "r": r, "tv": float(nonreconstruction_tv(formula, v, r, budget))}
                for v in range(formula.n) for r in radii]
    S = _solutions(formula, budget)
    sigma = tuple(int(a) for a in S[make_rng(seed).integers(len(S))])
    loose = []
    for v, d in enumerate(flip_distances(formula, sigma, budget)):
        row = {"v": v, "min_flip": d}
        try:
            res = looseness_process(formula, sigma, v, M, [seed, v], budget)
            row.update(success=res.success, hamming=res.hamming)
        except EmptySupport:
            row.update(success=None, hamming=None)
        loose.append(row)
    return {"replica_gap": rg.as_dict(), "nonrecon": nonrecon, "looseness": {"sigma": list(sigma), "rows": loose}}
