"""Atomic CSP formulas, partial assignments and pinning.

Every constraint forbids exactly one configuration of its variables.  Variables,
domain values and constraint ids are 0-indexed integers.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Mapping, NamedTuple, Sequence

from .errors import OverlapError, PinningViolation


class AtomicConstraint(NamedTuple):
    id: int
    vbl: tuple
    forbidden: tuple

    def pinned(self) -> "PinnedConstraint":
        """The unpinned constraint in canonical (sorted) pinned form."""
        pairs = sorted(zip(self.vbl, self.forbidden))
        return PinnedConstraint(self.id, tuple(v for v, _ in pairs), tuple(a for _, a in pairs))


class PinnedConstraint(NamedTuple):
    """A constraint restricted to its still-unassigned variables.

    ``vbl`` is sorted, so tuple comparison gives the canonical order
    (origin id first, then residual variables) and structural equality.
    """

    origin: int
    vbl: tuple
    forbidden: tuple


class _Outcome:
    __slots__ = ("name",)

    def __init__(self, name):
        self.name = name

    def __repr__(self):
        return self.name


SATISFIED = _Outcome("Satisfied")
VIOLATED = _Outcome("Violated")


class PartialAssignment(Mapping):
    """Immutable map from variable index to value."""

    __slots__ = ("_d", "_hash")

    def __init__(self, entries=None):
        self._d = dict(entries) if entries else {}
        self._hash = None

    @property
    def domain(self) -> frozenset:
        return frozenset(self._d)

    def __getitem__(self, v):
        return self._d[v]

    def __iter__(self):
        return iter(self._d)

    def __len__(self):
        return len(self._d)

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self._d.items()))
        return self._hash

    def __eq__(self, other):
        if isinstance(other, PartialAssignment):
            return self._d == other._d
        if isinstance(other, Mapping):
            return self._d == dict(other)
        return NotImplemented

    def __repr__(self):
        inner = ", ".join(f"v{v}={a}" for v, a in sorted(self._d.items()))
        return f"PartialAssignment({{{inner}}})"

    def extend(self, variables: Iterable[int], values: Iterable[int]) -> "PartialAssignment":
        """Concatenate with the assignment ``variables -> values`` (must be disjoint)."""
        d = dict(self._d)
        for v, a in zip(variables, values):
            if v in d:
                raise OverlapError(f"variable {v} already assigned")
            d[v] = a
        out = PartialAssignment.__new__(PartialAssignment)
        out._d = d
        out._hash = None
        return out

    def restrict(self, variables: Iterable[int]) -> "PartialAssignment":
        return PartialAssignment({v: self._d[v] for v in variables if v in self._d})

    def values_on(self, variables: Sequence[int]) -> tuple:
        return tuple(self._d[v] for v in variables)


EMPTY = PartialAssignment()


def concat(sigma: Mapping, tau: Mapping) -> PartialAssignment:
    """sigma ∧ tau for assignments on disjoint variable sets."""
    overlap = set(sigma).intersection(tau)
    if overlap:
        raise OverlapError(f"assignments overlap on {sorted(overlap)}")
    d = dict(sigma)
    d.update(tau)
    return PartialAssignment(d)


@dataclass(frozen=True)
class AtomicFormula:
    n: int
    q: int
    constraints: tuple
    meta: dict = field(default_factory=dict, compare=False, hash=False, repr=False)

    def __post_init__(self):
        if self.q < 2:
            raise ValueError("domain size q must be at least 2")
        cons = []
        for i, c in enumerate(self.constraints):
            if not isinstance(c, AtomicConstraint):
                vbl, forbidden = c
                c = AtomicConstraint(i, tuple(vbl), tuple(forbidden))
            if c.id != i:
                c = AtomicConstraint(i, tuple(c.vbl), tuple(c.forbidden))
            if len(c.vbl) != len(c.forbidden):
                raise ValueError(f"constraint {i}: vbl and forbidden lengths differ")
            if len(set(c.vbl)) != len(c.vbl):
                raise ValueError(f"constraint {i}: repeated variable")
            if any(not 0 <= v < self.n for v in c.vbl):
                raise ValueError(f"constraint {i}: variable out of range")
            if any(not 0 <= a < self.q for a in c.forbidden):
                raise ValueError(f"constraint {i}: forbidden value out of range")
            cons.append(AtomicConstraint(i, tuple(c.vbl), tuple(c.forbidden)))
        object.__setattr__(self, "constraints", tuple(cons))

    @property
    def m(self) -> int:
        return len(self.constraints)

    @property
    def k(self) -> int:
        """Maximum constraint width."""
        return max((len(c.vbl) for c in self.constraints), default=0)

    @property
    def density(self) -> float:
        return self.m / self.n if self.n else 0.0

    def pinned_constraints(self, ids=None) -> frozenset:
        ids = range(self.m) if ids is None else ids
        return frozenset(self.constraints[i].pinned() for i in ids)

    def subformula(self, ids) -> "AtomicFormula":
        """Formula keeping only the listed constraints (re-indexed in the given order)."""
        return AtomicFormula(self.n, self.q, tuple((self.constraints[i].vbl, self.constraints[i].forbidden) for i in ids))


def evaluate(formula: AtomicFormula, x: Sequence[int]) -> bool:
    if len(x) != formula.n:
        raise ValueError(f"assignment has length {len(x)}, expected {formula.n}")
    for c in formula.constraints:
        if all(x[v] == a for v, a in zip(c.vbl, c.forbidden)):
            return False
    return True


def satisfies(x: Sequence[int], c) -> bool:
    """Whether the full assignment x avoids the forbidden configuration of c."""
    return any(x[v] != a for v, a in zip(c.vbl, c.forbidden))


def pin_constraint(c, sigma: Mapping):
    """Pin one (possibly already pinned) constraint.

    Returns SATISFIED, VIOLATED, or the residual PinnedConstraint.
    """
    if isinstance(c, AtomicConstraint):
        c = c.pinned()
    rv, rf = [], []
    for v, a in zip(c.vbl, c.forbidden):
        b = sigma.get(v)
        if b is None:
            rv.append(v)
            rf.append(a)
        elif b != a:
            return SATISFIED
    if not rv:
        return VIOLATED
    if len(rv) == len(c.vbl):
        return c
    return PinnedConstraint(c.origin, tuple(rv), tuple(rf))


def pin_set(constraints: Iterable, sigma: Mapping):
    """Pin every constraint; returns (pinned frozenset, violated flag)."""
    out = set()
    violated = False
    for c in constraints:
        r = pin_constraint(c, sigma)
        if r is SATISFIED:
            continue
        if r is VIOLATED:
            violated = True
            continue
        out.add(r)
    return frozenset(out), violated


def pin_formula(formula_or_constraints, sigma: Mapping) -> frozenset:
    """The pinned constraint set C^sigma over V minus Lambda(sigma)."""
    cons = formula_or_constraints.constraints if isinstance(formula_or_constraints, AtomicFormula) else formula_or_constraints
    pinned, violated = pin_set(cons, sigma)
    if violated:
        raise PinningViolation("pinning completes a forbidden configuration")
    return pinned


def constraint_order(a: PinnedConstraint, b: PinnedConstraint) -> int:
    """-1, 0 or 1 under the canonical (origin, residual vbl) order."""
    ka, kb = (a.origin, a.vbl, a.forbidden), (b.origin, b.vbl, b.forbidden)
    return (ka > kb) - (ka < kb)


@dataclass(frozen=True)
class IncidenceGraphs:
    hyperedges: tuple
    adjacency: tuple

    def neighbors(self, i: int) -> frozenset:
        return self.adjacency[i]

    @property
    def max_degree(self) -> int:
        """Maximum degree of the line graph."""
        return max((len(a) for a in self.adjacency), default=0)


def build_graphs(formula: AtomicFormula) -> IncidenceGraphs:
    edges = tuple(frozenset(c.vbl) for c in formula.constraints)
    by_var = {}
    for i, e in enumerate(edges):
        for v in e:
            by_var.setdefault(v, []).append(i)
    adj = [set() for _ in edges]
    for ids in by_var.values():
        for i, j in combinations(ids, 2):
            adj[i].add(j)
            adj[j].add(i)
    return IncidenceGraphs(edges, tuple(frozenset(a) for a in adj))


def variable_degrees(formula: AtomicFormula) -> list:
    deg = [0] * formula.n
    for c in formula.constraints:
        for v in c.vbl:
            deg[v] += 1
    return deg
