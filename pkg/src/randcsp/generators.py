"""Seeded random instance generators and the coloring reduction."""
from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .csp import AtomicFormula
from .errors import InfeasibleCount


def make_rng(seed) -> np.random.Generator:
    """Philox counter-based generator; accepts an int, a SeedSequence or a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))


def child_seeds(seed, count: int) -> list:
    """Independent per-trial seeds derived from one root seed."""
    return np.random.SeedSequence(seed).spawn(count)


@dataclass(frozen=True)
class Hypergraph:
    n: int
    edges: tuple

    def __post_init__(self):
        edges = tuple(tuple(sorted(e)) for e in self.edges)
        for e in edges:
            if any(not 0 <= v < self.n for v in e):
                raise ValueError("hyperedge vertex out of range")
        object.__setattr__(self, "edges", edges)

    @property
    def m(self) -> int:
        return len(self.edges)

    def degrees(self) -> list:
        deg = [0] * self.n
        for e in self.edges:
            for v in e:
                deg[v] += 1
        return deg


def gen_ksat(k: int, n: int, m: int, seed) -> AtomicFormula:
    """Random k-SAT with m clauses of k independent uniform literals.

    A clause becomes one atomic constraint forbidding its falsifying assignment.
    Repeated literals collapse; tautological clauses are kept only in metadata.
    """
    if k < 1 or n < 1:
        raise ValueError("need k >= 1 and n >= 1")
    rng = make_rng(seed)
    clauses, constraints, tautologies = [], [], 0
    for _ in range(m):
        var = rng.integers(0, n, size=k)
        neg = rng.integers(0, 2, size=k)
        lits = [int(-(v + 1) if s else v + 1) for v, s in zip(var, neg)]
        clauses.append(lits)
        forb = {}
        taut = False
        for lit in lits:
            v, a = abs(lit) - 1, 1 if lit < 0 else 0
            if forb.get(v, a) != a:
                taut = True
                break
            forb[v] = a
        if taut:
            tautologies += 1
            continue
        vbl = tuple(sorted(forb))
        constraints.append((vbl, tuple(forb[v] for v in vbl)))
    meta = {"model": "ksat", "k": k, "n": n, "m": m, "tautologies": tautologies, "clauses": clauses}
    return AtomicFormula(n, 2, tuple(constraints), meta)


def gen_uniform_hypergraph(k: int, n: int, m: int, seed) -> Hypergraph:
    """m distinct uniform k-subsets of n vertices, by rejection sampling."""
    if m > comb(n, k):
        raise InfeasibleCount(f"only {comb(n, k)} distinct {k}-subsets of {n} vertices")
    rng = make_rng(seed)
    seen, edges = set(), []
    while len(edges) < m:
        e = tuple(sorted(int(v) for v in rng.choice(n, size=k, replace=False)))
        if e not in seen:
            seen.add(e)
            edges.append(e)
    return Hypergraph(n, tuple(edges))


def coloring_to_atomic(H: Hypergraph, q: int) -> AtomicFormula:
    """q atomic constraints per hyperedge, the j-th forbidding colour j on the whole edge."""
    if q < 2:
        raise ValueError("need q >= 2")
    cons = [(e, (j,) * len(e)) for e in H.edges for j in range(q)]
    return AtomicFormula(H.n, q, tuple(cons), {"model": "hypergraph-coloring", "edges": [list(e) for e in H.edges]})


def hypergraph_of(formula: AtomicFormula) -> Hypergraph:
    return Hypergraph(formula.n, tuple(c.vbl for c in formula.constraints))
