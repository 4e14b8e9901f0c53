"""Exhaustive-enumeration ground truth.

Sets of full assignments are Python integers used as bitsets over [q]^n.  The
assignment x has index sum(x[v] * q**v), so variable 0 is the fastest digit.
Counting is a popcount and conditioning is a bitwise AND, which keeps every
count exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Iterable, Mapping, Sequence

import numpy as np

from .csp import AtomicConstraint, AtomicFormula
from .errors import BudgetExceeded, EmptySupport, Unsatisfiable

DEFAULT_BUDGET = 1 << 24


def _key(c):
    if isinstance(c, AtomicConstraint):
        c = c.pinned()
    return c.vbl, c.forbidden


class Oracle:
    """Bitset enumerator for one formula (variables, domain and constraint list)."""

    def __init__(self, formula: AtomicFormula, budget: int = DEFAULT_BUDGET):
        size = formula.q ** formula.n
        if size > budget:
            raise BudgetExceeded(f"q^n = {size} exceeds enumeration budget {budget}", used=size)
        self.formula = formula
        self.n, self.q = formula.n, formula.q
        self.size = size
        self.full = (1 << size) - 1
        self._nbytes = (size + 7) // 8
        idx = np.arange(size, dtype=np.int64)
        self._lit = []
        for v in range(self.n):
            digit = (idx // self.q ** v) % self.q
            self._lit.append([self._pack(digit == a) for a in range(self.q)])
        self._viol = {}
        self._indices = {}
        self._omega = {}

    def _pack(self, bits: np.ndarray) -> int:
        return int.from_bytes(np.packbits(bits, bitorder="little").tobytes(), "little")

    # -- building blocks -------------------------------------------------
    def lit(self, v: int, a: int) -> int:
        return self._lit[v][a]

    def viol(self, c) -> int:
        """Mask of assignments that match the forbidden configuration of c."""
        key = _key(c)
        m = self._viol.get(key)
        if m is None:
            m = self.full
            for v, a in zip(*key):
                m &= self._lit[v][a]
            self._viol[key] = m
        return m

    def sat(self, c) -> int:
        return self.full ^ self.viol(c)

    def assign(self, sigma: Mapping) -> int:
        m = self.full
        for v, a in sigma.items():
            m &= self._lit[v][a]
        return m

    def assign_on(self, vbl: Sequence[int], values: Sequence[int]) -> int:
        m = self.full
        for v, a in zip(vbl, values):
            m &= self._lit[v][a]
        return m

    def satisfying(self, constraints: Iterable, sigma: Mapping = None) -> int:
        """Mask of Omega^{E and sigma}."""
        m = self.full if sigma is None else self.assign(sigma)
        for c in constraints:
            m &= self.full ^ self.viol(c)
        return m

    def omega(self, exclude: int = None, upto: int = None) -> int:
        """Solutions of the formula, optionally dropping one constraint or keeping a prefix."""
        key = (exclude, upto)
        m = self._omega.get(key)
        if m is None:
            cons = self.formula.constraints if upto is None else self.formula.constraints[:upto]
            m = self.satisfying(c for c in cons if c.id != exclude)
            self._omega[key] = m
        return m

    # -- queries ----------------------------------------------------------
    @staticmethod
    def count(mask: int) -> int:
        return mask.bit_count()

    def indices(self, mask: int) -> np.ndarray:
        arr = self._indices.get(mask)
        if arr is None:
            raw = np.frombuffer(mask.to_bytes(self._nbytes, "little"), dtype=np.uint8)
            arr = np.flatnonzero(np.unpackbits(raw, bitorder="little")[: self.size])
            if len(self._indices) > 4096:
                self._indices.clear()
            self._indices[mask] = arr
        return arr

    def sample_index(self, mask: int, rng: np.random.Generator) -> int:
        arr = self.indices(mask)
        if len(arr) == 0:
            raise EmptySupport("cannot sample from an empty set of assignments")
        return int(arr[rng.integers(len(arr))])

    def value(self, index: int, v: int) -> int:
        return (index // self.q ** v) % self.q

    def decode(self, index: int) -> tuple:
        out = []
        for _ in range(self.n):
            index, a = divmod(index, self.q)
            out.append(a)
        return tuple(out)

    def decode_many(self, indices: np.ndarray) -> np.ndarray:
        pw = self.q ** np.arange(self.n, dtype=np.int64)
        return (np.asarray(indices, dtype=np.int64)[:, None] // pw) % self.q

    def encode(self, x: Sequence[int]) -> int:
        return sum(a * self.q ** v for v, a in enumerate(x))

    @staticmethod
    def first(mask: int) -> int:
        if not mask:
            raise EmptySupport("empty set of assignments")
        return (mask & -mask).bit_length() - 1


_ORACLES = {}


def get_oracle(formula: AtomicFormula, budget: int = DEFAULT_BUDGET) -> Oracle:
    """Oracle cache keyed by formula identity."""
    key = (formula.n, formula.q, formula.constraints)
    o = _ORACLES.get(key)
    if o is None:
        o = Oracle(formula, budget)
        if len(_ORACLES) > 64:
            _ORACLES.clear()
        _ORACLES[key] = o
    return o


@dataclass(frozen=True)
class MarginalTable:
    scope: tuple
    probabilities: dict

    def __getitem__(self, config):
        return self.probabilities[tuple(config)]

    def as_array(self) -> np.ndarray:
        return np.array([float(p) for p in self.probabilities.values()])


def _mask_for(formula, constraints, sigma, budget):
    o = get_oracle(formula, budget)
    cons = formula.constraints if constraints is None else constraints
    return o, o.satisfying(cons, sigma or {})


def count_exact(formula: AtomicFormula, constraints=None, sigma: Mapping = None, budget: int = DEFAULT_BUDGET) -> int:
    """|Omega^{E and sigma}|; constraints default to the whole formula."""
    _, m = _mask_for(formula, constraints, sigma, budget)
    return m.bit_count()


def conditional_prob(formula: AtomicFormula, constraints, sigma: Mapping, c, budget: int = DEFAULT_BUDGET) -> Fraction:
    o, m = _mask_for(formula, constraints, sigma, budget)
    total = m.bit_count()
    if total == 0:
        raise EmptySupport("conditioning on an empty set")
    return Fraction((m & o.sat(c)).bit_count(), total)


def marginal(formula: AtomicFormula, constraints, sigma: Mapping, scope: Sequence[int], budget: int = DEFAULT_BUDGET) -> MarginalTable:
    o, m = _mask_for(formula, constraints, sigma, budget)
    total = m.bit_count()
    if total == 0:
        raise EmptySupport("marginal of an empty set")
    scope = tuple(scope)
    probs = {}
    for config in product(range(formula.q), repeat=len(scope)):
        probs[config] = Fraction((m & o.assign_on(scope, config)).bit_count(), total)
    return MarginalTable(scope, probs)


def sample_exact(formula: AtomicFormula, constraints, sigma: Mapping, seed, budget: int = DEFAULT_BUDGET) -> tuple:
    o, m = _mask_for(formula, constraints, sigma, budget)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.Generator(np.random.Philox(seed))
    return o.decode(o.sample_index(m, rng))


def solutions(formula: AtomicFormula, budget: int = DEFAULT_BUDGET) -> np.ndarray:
    """All satisfying assignments as rows, in index order."""
    o = get_oracle(formula, budget)
    return o.decode_many(o.indices(o.omega()))


def first_solution(formula: AtomicFormula, budget: int = DEFAULT_BUDGET) -> tuple:
    o = get_oracle(formula, budget)
    m = o.omega()
    if not m:
        raise Unsatisfiable("formula has no satisfying assignment")
    return o.decode(o.first(m))


def tv_distance(p: Mapping, r: Mapping) -> float:
    keys = set(p) | set(r)
    return 0.5 * sum(abs(float(p.get(x, 0)) - float(r.get(x, 0))) for x in keys)


# -- local lemma checks -----------------------------------------------------

@dataclass(frozen=True)
class LllVerdict:
    holds: bool
    failing: tuple
    detail: dict


def _as_fraction(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


def check_lll(formula: AtomicFormula, x_values, include_self: bool = True) -> LllVerdict:
    """Check P[not c] <= x(c) * prod (1 - x(c')) over c' sharing a variable with c.

    The product ranges over every c' whose variables meet vbl(c).  Read
    literally that includes c itself; ``include_self=False`` drops it.
    """
    xs = _xs(formula, x_values)
    failing, detail = [], {}
    for c in formula.constraints:
        lhs = Fraction(1, formula.q ** len(c.vbl))
        rhs = xs[c.id]
        vc = set(c.vbl)
        for d in formula.constraints:
            if d.id == c.id and not include_self:
                continue
            if vc.intersection(d.vbl):
                rhs *= 1 - xs[d.id]
        detail[c.id] = (lhs, rhs)
        if lhs > rhs:
            failing.append(c.id)
    return LllVerdict(not failing, tuple(failing), detail)


def _xs(formula, x_values):
    if isinstance(x_values, Mapping):
        xs = {i: _as_fraction(x_values[i]) for i in range(formula.m)}
    elif isinstance(x_values, (int, float, Fraction)):
        xs = {i: _as_fraction(x_values) for i in range(formula.m)}
    else:
        xs = {i: _as_fraction(x) for i, x in enumerate(x_values)}
    for i, x in xs.items():
        if not 0 < x < 1:
            raise ValueError(f"x({i}) = {x} is outside (0, 1)")
    return xs


@dataclass(frozen=True)
class Event:
    """An event determined by the variables in ``vbl``: the set of allowed configurations."""

    vbl: tuple
    configs: frozenset


def check_hss_bound(formula: AtomicFormula, x_values, event: Event, budget: int = DEFAULT_BUDGET) -> LllVerdict:
    """Exact check of P[A | all constraints] <= P(A) * prod (1 - x(c))^-1."""
    xs = _xs(formula, x_values)
    o = get_oracle(formula, budget)
    omega = o.omega()
    total = omega.bit_count()
    if total == 0:
        raise Unsatisfiable("formula has no satisfying assignment")
    a_mask = 0
    for config in event.configs:
        a_mask |= o.assign_on(event.vbl, config)
    cond = Fraction((omega & a_mask).bit_count(), total)
    prior = Fraction(len(event.configs), formula.q ** len(event.vbl))
    bound = prior
    va = set(event.vbl)
    for c in formula.constraints:
        if va.intersection(c.vbl):
            bound /= 1 - xs[c.id]
    holds = cond <= bound
    return LllVerdict(holds, () if holds else (event.vbl,), {"conditional": cond, "bound": bound})


def marginal_bound(q: int, k: int, s_size: int, s_good: int, params) -> float | None:
    """Upper bound on a marginal of s_size variables, s_good of them good; None if undefined."""
    base = 1 - math.e * q ** (-(1 - params.eps1) * k)
    if base <= 0:
        return None
    log_b = -s_good * math.log(q) - s_size * params.p1 * params.alpha * math.log(base)
    return math.exp(log_b) if log_b < 700 else math.inf


def check_marginal_bound(formula: AtomicFormula, params, scope: Sequence[int], c0: int | None = None,
                         vgood=None, budget: int = DEFAULT_BUDGET) -> dict:
    """Compare every marginal on ``scope`` with the good-vertex bound.

    Checks mu_C and mu_{C minus c0}; with c0=None every single removal is checked.
    Returns a report with ``holds`` set to None when the bound is undefined.
    """
    from .structure import identify_bad, hypergraph_of

    if vgood is None:
        H = hypergraph_of(formula)
        bad = identify_bad(H, range(formula.n), params.eps1, params.p1, params.alpha, k=params.k)
        vgood = bad.vgood
    scope = tuple(scope)
    bound = marginal_bound(formula.q, params.k, len(scope), len(set(scope) & set(vgood)), params)
    report = {"scope": list(scope), "bound": bound, "holds": None, "max_marginal": None}
    if bound is None:
        return report
    o = get_oracle(formula, budget)
    removals = [None] + (list(range(formula.m)) if c0 is None else [c0])
    worst = 0.0
    for r in removals:
        m = o.omega() if r is None else o.omega(exclude=r)
        total = m.bit_count()
        if total == 0:
            continue
        for config in product(range(formula.q), repeat=len(scope)):
            p = (m & o.assign_on(scope, config)).bit_count() / total
            worst = max(worst, p)
    report["max_marginal"] = worst
    report["holds"] = worst <= bound
    return report
