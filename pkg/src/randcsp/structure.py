"""Nice-hypergraph parameters, bad-vertex identification and property checkers.

Every checker returns a plain dict report.  Universally quantified properties
are enumerated exhaustively up to a work budget; beyond it the report says so.
Logarithms of n are natural.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable

from .errors import BudgetExceeded
from .generators import Hypergraph, hypergraph_of, make_rng

DEFAULT_WORK = 2_000_000


@dataclass(frozen=True)
class NiceParams:
    k: int
    alpha: float
    q: int
    eta: float
    rho: float
    eps1: float
    eps2: float
    p1: float
    p2: float
    warnings: tuple = field(default=(), compare=False)

    def as_dict(self) -> dict:
        return {f: getattr(self, f) for f in ("k", "alpha", "q", "eta", "rho", "eps1", "eps2", "p1", "p2")} | {
            "warnings": list(self.warnings)
        }


def derive_params(k: int, alpha: float, q: int = 2) -> NiceParams:
    """Smallest admissible eta = 4/k, with rho solving e*(rho*k*alpha)**eta = 1."""
    if k < 1 or alpha <= 0:
        raise ValueError("need k >= 1 and alpha > 0")
    eta = 4 / k
    rho = math.exp(-1 / eta) / (k * alpha)
    warnings = []
    if k < 30:
        warnings.append("k < 30")
    if alpha > q ** k:
        warnings.append("alpha > q^k")
    if eta >= 1:
        warnings.append("eta >= 1")
    return NiceParams(
        k=k,
        alpha=alpha,
        q=q,
        eta=eta,
        rho=rho,
        eps1=2 * eta,
        eps2=2 / (k * k * (1 - eta) * eta) if eta != 1 else math.inf,
        p1=6 * k ** 7,
        p2=math.e * k * k,
        warnings=tuple(warnings),
    )


def line_graph(H: Hypergraph) -> list:
    """Adjacency sets of hyperedges that share a vertex."""
    by_v = {}
    for i, e in enumerate(H.edges):
        for v in e:
            by_v.setdefault(v, []).append(i)
    adj = [set() for _ in H.edges]
    for ids in by_v.values():
        for i, j in combinations(ids, 2):
            adj[i].add(j)
            adj[j].add(i)
    return adj


def hd(H: Hypergraph, vertices: Iterable[int], p1: float, alpha: float) -> frozenset:
    deg = H.degrees()
    return frozenset(v for v in vertices if deg[v] >= p1 * alpha)


@dataclass(frozen=True)
class BadClassification:
    vbad: frozenset
    ebad: frozenset
    vgood: frozenset
    egood: frozenset


def identify_bad(H: Hypergraph, V0: Iterable[int], eps1: float, p1: float, alpha: float,
                 k: int | None = None, order=None) -> BadClassification:
    """Grow the bad set from HD(V0) by absorbing edges with more than eps1*k bad vertices.

    ``order`` fixes which qualifying edge is absorbed first at each round.
    """
    k = max((len(e) for e in H.edges), default=0) if k is None else k
    order = list(range(H.m)) if order is None else list(order)
    vbad = set(hd(H, V0, p1, alpha))
    ebad = set()
    threshold = eps1 * k
    changed = True
    while changed:
        changed = False
        for i in order:
            if i in ebad:
                continue
            e = H.edges[i]
            if sum(1 for v in e if v in vbad) > threshold:
                vbad.update(e)
                ebad.add(i)
                changed = True
                break
    vb, eb = frozenset(vbad), frozenset(ebad)
    return BadClassification(vb, eb, frozenset(range(H.n)) - vb, frozenset(range(H.m)) - eb)


def check_max_degree(H: Hypergraph, k: int, alpha: float) -> dict:
    deg = H.degrees()
    dmax = max(deg, default=0)
    bound = 4 * k * alpha + 6 * math.log(max(H.n, 1))
    return {"holds": dmax <= bound, "max_degree": dmax, "bound": bound, "exhaustive": True}


def check_edge_expansion(H: Hypergraph, eta: float, rho: float, cap: int, k: int | None = None,
                         work: int = DEFAULT_WORK) -> dict:
    """Every l <= min(rho*|E|, cap) edges cover at least (1-eta)*k*l vertices."""
    k = max((len(e) for e in H.edges), default=0) if k is None else k
    lmax = min(math.floor(rho * H.m), cap)
    needed = sum(math.comb(H.m, l) for l in range(1, lmax + 1))
    if needed > work:
        raise BudgetExceeded(f"edge expansion needs {needed} subsets", used=needed)
    sets = [frozenset(e) for e in H.edges]
    for l in range(1, lmax + 1):
        for combo in combinations(range(H.m), l):
            union = frozenset().union(*(sets[i] for i in combo))
            if len(union) < (1 - eta) * k * l:
                return {"holds": False, "witness": list(combo), "union": len(union), "ell": l,
                        "ell_max": lmax, "checked": needed, "exhaustive": lmax == math.floor(rho * H.m)}
    return {"holds": True, "witness": None, "ell_max": lmax, "checked": needed,
            "exhaustive": lmax == math.floor(rho * H.m)}


def connected_sets(adj: list, start: int | None, size: int, work: int = DEFAULT_WORK) -> set:
    """All connected edge subsets of the given size, containing ``start`` if it is not None."""
    if size < 1:
        return set()
    level = {frozenset([start])} if start is not None else {frozenset([i]) for i in range(len(adj))}
    used = len(level)
    for _ in range(size - 1):
        nxt = set()
        for s in level:
            frontier = set().union(*(adj[i] for i in s)) - s
            for u in frontier:
                nxt.add(s | {u})
                used += 1
                if used > work:
                    raise BudgetExceeded(f"connected-set enumeration exceeded {work}", used=used)
        level = nxt
    return level


def count_connected_sets(H: Hypergraph, e: int, ell: int, work: int = DEFAULT_WORK) -> int:
    return len(connected_sets(line_graph(H), e, ell, work))


def check_neighbourhood_growth(H: Hypergraph, p2: float, alpha: float, ell_max: int,
                               work: int = DEFAULT_WORK) -> dict:
    adj = line_graph(H)
    worst = None
    for e in range(H.m):
        for l in range(1, ell_max + 1):
            cnt = len(connected_sets(adj, e, l, work))
            bound = H.n ** 3 * (p2 * alpha) ** l
            if cnt > bound:
                return {"holds": False, "witness": {"edge": e, "ell": l, "count": cnt, "bound": bound},
                        "ell_max": ell_max, "exhaustive": False}
            ratio = cnt / bound if bound else math.inf
            if worst is None or ratio > worst[0]:
                worst = (ratio, e, l, cnt)
    out = {"holds": True, "witness": None, "ell_max": ell_max, "exhaustive": False}
    if worst:
        out["tightest"] = {"edge": worst[1], "ell": worst[2], "count": worst[3]}
    return out


def check_bad_bounds(H: Hypergraph, params: NiceParams, samples: int = 20, seed=0, cap: int = 6,
                     work: int = DEFAULT_WORK) -> dict:
    """Bad-vertex count bound on V and random V0, and bad-fraction bound on connected sets."""
    rng = make_rng(seed)
    k = params.k
    report = {"bad_vertices": {"holds": True, "witness": None, "checked": 0},
              "bad_fraction": {"holds": True, "witness": None, "checked": 0}}
    subsets = [list(range(H.n))]
    for _ in range(samples):
        subsets.append([v for v in range(H.n) if rng.random() < 0.5])
    for V0 in subsets:
        cls = identify_bad(H, V0, params.eps1, params.p1, params.alpha, k=k)
        nhd = len(hd(H, V0, params.p1, params.alpha))
        report["bad_vertices"]["checked"] += 1
        if len(cls.vbad) > 4 / params.eps1 * nhd:
            report["bad_vertices"].update(holds=False, witness={"V0": V0, "vbad": sorted(cls.vbad), "hd": nhd})
            break
    full = identify_bad(H, range(H.n), params.eps1, params.p1, params.alpha, k=k)
    report["bad_vertices"]["ratio_V"] = (len(full.vbad) / len(hd(H, range(H.n), params.p1, params.alpha))
                                         if hd(H, range(H.n), params.p1, params.alpha) else None)
    lo = max(1, math.ceil(math.log(max(H.n, 1))))
    adj = line_graph(H)
    exhaustive = True
    for l in range(lo, cap + 1):
        try:
            sets = connected_sets(adj, None, l, work)
        except BudgetExceeded:
            exhaustive = False
            break
        for s in sets:
            report["bad_fraction"]["checked"] += 1
            nbad = len(s & full.ebad)
            if nbad > params.eps2 * l:
                report["bad_fraction"].update(holds=False, witness={"edges": sorted(s), "bad": nbad})
                break
        if not report["bad_fraction"]["holds"]:
            break
    report["bad_fraction"]["ell_range"] = [lo, cap]
    report["bad_fraction"]["exhaustive"] = exhaustive
    report["bad_vertices"]["exhaustive"] = False
    return report


def bad_components(H: Hypergraph, ebad: Iterable[int]) -> list:
    """Connected components of the line graph restricted to bad hyperedges."""
    ebad = set(ebad)
    adj = line_graph(H)
    seen, comps = set(), []
    for s in sorted(ebad):
        if s in seen:
            continue
        comp, stack = [], [s]
        seen.add(s)
        while stack:
            u = stack.pop()
            comp.append(u)
            for w in adj[u]:
                if w in ebad and w not in seen:
                    seen.add(w)
                    stack.append(w)
        comps.append(sorted(comp))
    return comps


def is_nice(H: Hypergraph, params: NiceParams, work: int = DEFAULT_WORK, cap: int = 4, seed=0) -> dict:
    """Conjunction of every property; budget limits are reported rather than raised."""
    k = params.k
    report = {}
    width_ok = all(len(e) <= k for e in H.edges)
    report["width_and_density"] = {"holds": width_ok and params.alpha <= params.q ** k, "exhaustive": True}
    report["max_degree"] = check_max_degree(H, k, params.alpha)

    def guarded(name, fn):
        try:
            report[name] = fn()
        except BudgetExceeded as exc:
            report[name] = {"holds": None, "exhaustive": False, "budget_exceeded": str(exc)}

    guarded("edge_expansion", lambda: check_edge_expansion(H, params.eta, params.rho, cap, k=k, work=work))
    guarded("neighbourhood_growth", lambda: check_neighbourhood_growth(H, params.p2, params.alpha, cap, work=work))
    guarded("bad_bounds", lambda: check_bad_bounds(H, params, seed=seed, cap=cap, work=work))
    full = identify_bad(H, range(H.n), params.eps1, params.p1, params.alpha, k=k)
    comps = bad_components(H, full.ebad)
    big = [c for c in comps if len(c) >= math.log(max(H.n, 1))]
    report["bad_components"] = {"holds": not big, "witness": big[0] if big else None, "exhaustive": True,
                                "sizes": [len(c) for c in comps]}
    verdicts = []
    for name, r in report.items():
        if name == "bad_bounds" and "bad_vertices" in r:
            verdicts += [r["bad_vertices"]["holds"], r["bad_fraction"]["holds"]]
        else:
            verdicts.append(r.get("holds"))
    nice = all(v is True for v in verdicts)
    reasons = [n for n, r in report.items() if r.get("holds") is False
               or (n == "bad_bounds" and "bad_vertices" in r
                   and not (r["bad_vertices"]["holds"] and r["bad_fraction"]["holds"]))]
    return {"nice": nice, "undetermined": any(v is None for v in verdicts) and not reasons,
            "failed": reasons, "properties": report, "params": params.as_dict()}


__all__ = [
    "NiceParams", "BadClassification", "derive_params", "hd", "identify_bad", "check_max_degree",
    "check_edge_expansion", "count_connected_sets", "connected_sets", "check_neighbourhood_growth",
    "check_bad_bounds", "bad_components", "is_nice", "line_graph", "hypergraph_of",
]
