"""Constraint-wise recursive coupling, witness trees and the truncated process.

State is kept in pinned form: ``Es`` and ``Ft`` are the pinned sets E^sigma and
F^tau, and ``mE``/``mF`` are the oracle masks of Omega^{E and sigma} and
Omega^{F and tau}.  Adding a constraint c drawn from F^tau to E leaves E^sigma
as Es | {c} because c is already pinned on Lambda, and pinning composes, so
assignment steps only re-pin the constraints that touch the new variables.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .csp import AtomicFormula, PinnedConstraint, pin_constraint, pin_set, SATISFIED, VIOLATED
from .errors import CSPError, EmptySupport, Unsatisfiable
from .generators import child_seeds, make_rng
from .oracle import DEFAULT_BUDGET, get_oracle


@dataclass(frozen=True)
class WitnessTree:
    """Rooted tree over constraint ids; parallel tuples indexed by insertion order."""

    nodes: tuple = ()
    parent: tuple = ()
    depth: tuple = ()
    vbls: tuple = ()

    def __len__(self):
        return len(self.nodes)

    @property
    def root(self):
        return self.nodes[0] if self.nodes else None

    def variables(self) -> frozenset:
        return frozenset().union(*self.vbls) if self.vbls else frozenset()

    def depth_of(self, cid: int) -> int:
        return self.depth[self.nodes.index(cid)]

    def parent_of(self, cid: int):
        p = self.parent[self.nodes.index(cid)]
        return None if p < 0 else self.nodes[p]

    def as_dict(self) -> dict:
        return {"nodes": list(self.nodes), "parent": [None if p < 0 else self.nodes[p] for p in self.parent],
                "depth": list(self.depth)}


EMPTY_TREE = WitnessTree()


def tree_extend(T: WitnessTree, c) -> WitnessTree:
    """T plus c, attached under the deepest node sharing a variable (smallest id on ties)."""
    vc = frozenset(c.vbl)
    if not T.nodes:
        return WitnessTree((c.id,), (-1,), (0,), (vc,))
    best = None
    for i, (cid, d, vb) in enumerate(zip(T.nodes, T.depth, T.vbls)):
        if vb & vc and (best is None or d > best[0] or (d == best[0] and cid < best[1])):
            best = (d, cid, i)
    if best is None:
        return T
    return WitnessTree(T.nodes + (c.id,), T.parent + (best[2],), T.depth + (best[0] + 1,), T.vbls + (vc,))


def witness_tree_of_log(formula: AtomicFormula, log) -> WitnessTree:
    T = EMPTY_TREE
    for cid in log:
        T = tree_extend(T, formula.constraints[cid])
    return T


def check_tree_invariants(formula: AtomicFormula, log, T: WitnessTree) -> list:
    """Violated witness-tree properties, as readable strings (empty when all hold)."""
    bad = []
    if len(set(log)) != len(log):
        bad.append("execution log repeats a constraint")
    if len(T) != len(log):
        bad.append(f"|V(T)| = {len(T)} differs from |L| = {len(log)}")
    vb = {c.id: set(c.vbl) for c in formula.constraints}
    for i, cid in enumerate(T.nodes):
        p = T.parent[i]
        if i == 0 and p != -1:
            bad.append("root has a parent")
        if i > 0:
            if p < 0 or p >= i:
                bad.append(f"node {cid} has no earlier parent")
                continue
            if not vb[cid] & vb[T.nodes[p]]:
                bad.append(f"tree edge {T.nodes[p]}-{cid} is not a line-graph edge")
            if T.depth[i] != T.depth[p] + 1:
                bad.append(f"node {cid} depth inconsistent with parent")
    pos = {cid: i for i, cid in enumerate(log)}
    for i, a in enumerate(T.nodes):
        for j in range(i + 1, len(T.nodes)):
            b = T.nodes[j]
            if vb[a] & vb[b]:
                if T.depth[i] == T.depth[j]:
                    bad.append(f"nodes {a},{b} share depth and a variable")
                later, earlier = (j, i) if pos.get(b, j) > pos.get(a, i) else (i, j)
                if T.depth[later] <= T.depth[earlier]:
                    bad.append(f"later node {T.nodes[later]} is not deeper than {T.nodes[earlier]}")
    return bad


def repin(P: frozenset, assign: Mapping):
    """Pin the members of P touching ``assign``; returns (new set, violated flag)."""
    out, violated, changed = [], False, False
    for c in P:
        if any(v in assign for v in c.vbl):
            changed = True
            r = pin_constraint(c, assign)
            if r is SATISFIED:
                continue
            if r is VIOLATED:
                violated = True
                continue
            out.append(r)
        else:
            out.append(c)
    return (frozenset(out) if changed else P), violated


def next_choice(Es: frozenset, Ft: frozenset):
    """(side, c): side 'F' when F^tau is not inside E^sigma, else 'E'."""
    d = Ft - Es
    if d:
        return "F", min(d)
    return "E", min(Es - Ft)


@dataclass
class CoupleResult:
    X: tuple
    Y: tuple
    log: tuple
    tree: WitnessTree
    witness: dict
    sigma: dict
    tau: dict
    steps: int

    @property
    def hamming(self) -> int:
        return sum(a != b for a, b in zip(self.X, self.Y))


def _couple_from(formula, o, Es, Ft, sigma, tau, mE, mF, rng, cap) -> CoupleResult:
    sigma, tau = dict(sigma), dict(tau)
    log, T, witness = [], EMPTY_TREE, {}
    steps = 0
    while True:
        if Es == Ft:
            z = list(o.decode(o.sample_index(mE, rng)))
            X = tuple(z)
            for v, a in tau.items():
                z[v] = a
            return CoupleResult(X, tuple(z), tuple(log), T, witness, sigma, tau, steps)
        steps += 1
        if steps > cap:
            raise CSPError(f"coupling exceeded the step cap {cap}")
        side, c = next_choice(Es, Ft)
        sat_c = o.sat(c)
        if side == "F":
            total = mE.bit_count()
            if rng.integers(total) < (mE & sat_c).bit_count():
                Es = Es | {c}
                mE &= sat_c
                continue
            pi = c.forbidden
            y = o.sample_index(mF, rng)
            rho = tuple(o.value(y, v) for v in c.vbl)
            wit = rho
        else:
            total = mF.bit_count()
            if rng.integers(total) < (mF & sat_c).bit_count():
                Ft = Ft | {c}
                mF &= sat_c
                continue
            x = o.sample_index(mE, rng)
            pi = tuple(o.value(x, v) for v in c.vbl)
            rho = c.forbidden
            wit = pi
        a_s, a_t = dict(zip(c.vbl, pi)), dict(zip(c.vbl, rho))
        sigma.update(a_s)
        tau.update(a_t)
        witness.update(zip(c.vbl, wit))
        Es, _ = repin(Es, a_s)
        Ft, _ = repin(Ft, a_t)
        mE &= o.assign_on(c.vbl, pi)
        mF &= o.assign_on(c.vbl, rho)
        if not mE or not mF:
            raise CSPError("coupling reached an empty conditional support")
        log.append(c.origin)
        T = tree_extend(T, formula.constraints[c.origin])


def initial_state(formula: AtomicFormula, c0: int, o):
    E = formula.pinned_constraints(i for i in range(formula.m) if i != c0)
    F = formula.pinned_constraints()
    return E, F, o.omega(exclude=c0), o.omega()


def couple(formula: AtomicFormula, c0: int, seed, budget: int = DEFAULT_BUDGET) -> CoupleResult:
    """Run the recursive coupling from (C minus c0, C, empty, empty)."""
    o = get_oracle(formula, budget)
    E, F, mE, mF = initial_state(formula, c0, o)
    if not mF:
        raise Unsatisfiable("formula has no satisfying assignment")
    return _couple_from(formula, o, E, F, {}, {}, mE, mF, make_rng(seed), formula.m + formula.n + 1)


def couple_pinned(formula: AtomicFormula, v: int, x1: int, x2: int, seed, budget: int = DEFAULT_BUDGET):
    """Couple mu_C conditioned on v=x1 with mu_C conditioned on v=x2; returns (X, Y)."""
    return couple_pinned_full(formula, v, x1, x2, seed, budget)[:2]


def couple_pinned_full(formula, v, x1, x2, seed, budget=DEFAULT_BUDGET):
    o = get_oracle(formula, budget)
    omega = o.omega()
    mE, mF = omega & o.lit(v, x1), omega & o.lit(v, x2)
    if not mE or not mF:
        raise EmptySupport(f"no solution with v{v} = {x1 if not mE else x2}")
    Es, _ = pin_set(formula.constraints, {v: x1})
    Ft, _ = pin_set(formula.constraints, {v: x2})
    res = _couple_from(formula, o, Es, Ft, {v: x1}, {v: x2}, mE, mF, make_rng(seed), formula.m + formula.n + 1)
    return res.X, res.Y, res


@dataclass
class ProcessOutcome:
    E: frozenset
    F: frozenset
    sigma: dict
    tau: dict
    tree: WitnessTree
    witness: dict
    log: tuple = ()
    X: tuple = ()
    Y: tuple = ()
    coupled: bool = False
    truncated: bool = False


def run_truncated(formula, Es, Ft, sigma, tau, X, Y, M) -> ProcessOutcome:
    """Deferred-decision process driven by fixed full assignments X and Y."""
    sigma, tau = dict(sigma), dict(tau)
    log, T, witness = [], EMPTY_TREE, {}
    cap = formula.m + formula.n + 1
    for _ in range(4 * cap * max(formula.m, 1) + 1):
        coupled = Es == Ft
        if coupled or len(T) >= M:
            return ProcessOutcome(Es, Ft, sigma, tau, T, witness, tuple(log), X, Y, coupled, len(T) >= M)
        side, c = next_choice(Es, Ft)
        xs = tuple(X[v] for v in c.vbl)
        ys = tuple(Y[v] for v in c.vbl)
        if side == "F":
            if xs != c.forbidden:
                Es = Es | {c}
                continue
            witness.update(zip(c.vbl, ys))
        else:
            if ys != c.forbidden:
                Ft = Ft | {c}
                continue
            witness.update(zip(c.vbl, xs))
        a_s, a_t = dict(zip(c.vbl, xs)), dict(zip(c.vbl, ys))
        sigma.update(a_s)
        tau.update(a_t)
        Es, _ = repin(Es, a_s)
        Ft, _ = repin(Ft, a_t)
        log.append(c.origin)
        T = tree_extend(T, formula.constraints[c.origin])
    raise CSPError("truncated process did not terminate")


def truncated_process(formula: AtomicFormula, c0: int, M: int, seed, budget: int = DEFAULT_BUDGET) -> ProcessOutcome:
    """M-truncated process with pre-drawn X from mu_{C minus c0} and Y from mu_C."""
    o = get_oracle(formula, budget)
    E, F, mE, mF = initial_state(formula, c0, o)
    if not mF:
        raise Unsatisfiable("formula has no satisfying assignment")
    rng = make_rng(seed)
    X = o.decode(o.sample_index(mE, rng))
    Y = o.decode(o.sample_index(mF, rng))
    return run_truncated(formula, E, F, {}, {}, X, Y, M)


def _decay_chunk(args):
    formula, c0, seeds, budget = args
    out = []
    for s in seeds:
        r = couple(formula, c0, s, budget)
        out.append((r.hamming, len(r.tree)))
    return out


def decay_curve(formula: AtomicFormula, c0: int, trials: int, Mmax: int, seed, jobs: int = 1,
                budget: int = DEFAULT_BUDGET) -> dict:
    """Empirical Pr[d_Ham(X, Y) >= k*M] for M = 1..Mmax over independent couple() runs."""
    if trials <= 0:
        return {"rows": [], "mean_hamming": None, "trials": 0}
    seeds = child_seeds(seed, trials)
    if jobs > 1:
        chunks = [seeds[i::jobs] for i in range(jobs)]
        with ProcessPoolExecutor(jobs) as ex:
            parts = list(ex.map(_decay_chunk, [(formula, c0, ch, budget) for ch in chunks]))
        data = [x for p in parts for x in p]
    else:
        data = _decay_chunk((formula, c0, seeds, budget))
    d = np.array([h for h, _ in data])
    t = np.array([s for _, s in data])
    k = max(formula.k, 1)
    log_n = math.log(max(formula.n, 2))
    from .structure import derive_params

    rho_m = derive_params(k, max(formula.density, 1e-12), formula.q).rho * formula.m
    rows = []
    for M in range(1, Mmax + 1):
        rows.append({"M": M, "tail": float(np.mean(d >= k * M)), "tree_tail": float(np.mean(t >= M)),
                     "bound": 2.0 ** (-M), "in_window": bool(log_n <= M <= rho_m)})
    return {"rows": rows, "mean_hamming": float(d.mean()), "trials": trials, "k": k}


__all__ = [
    "WitnessTree", "tree_extend", "witness_tree_of_log", "check_tree_invariants", "couple", "couple_pinned",
    "truncated_process", "run_truncated", "decay_curve", "ProcessOutcome", "CoupleResult", "PinnedConstraint",
]
