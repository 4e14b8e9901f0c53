"""Telescoping approximate counting and the LP-driven dynamic sampler."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .csp import AtomicFormula, evaluate
from .errors import Unsatisfiable, ZeroDenominator
from .generators import make_rng
from .lp import COUP, INTERNAL, CouplingTree, _cfg, _config_index, estimate_ratio
from .oracle import first_solution, get_oracle


def counting_M(m: int, eps: float) -> int:
    return 1 + math.ceil(math.log2(4 * m / eps))


def sampler_M(eps: float) -> int:
    return 1 + math.ceil(math.log2(4 / eps))


def _prefix(formula: AtomicFormula, i: int) -> AtomicFormula:
    return formula.subformula(range(i))


@dataclass
class CountResult:
    estimate: float
    log_estimate: float
    interval: tuple
    steps: list
    M: int
    eps: float
    exact_steps: bool

    def as_dict(self) -> dict:
        return {"estimate": self.estimate, "log_estimate": self.log_estimate, "interval": list(self.interval),
                "M": self.M, "eps": self.eps, "exact_steps": self.exact_steps, "steps": self.steps}


def count(formula: AtomicFormula, eps: float, mode: str = "float", bounds: str = "auto", M: int | None = None,
          max_nodes: int | None = None) -> CountResult:
    """Z-hat = q^n * prod 1/ratio_i with each ratio the midpoint of an LP-certified window."""
    o = get_oracle(formula)
    if not o.omega():
        raise Unsatisfiable("formula has no satisfying assignment")
    log_qn = formula.n * math.log(formula.q)
    m = formula.m
    if m == 0:
        return CountResult(float(formula.q ** formula.n), log_qn, (float(formula.q ** formula.n),) * 2, [], 0, eps, True)
    M = counting_M(m, eps) if M is None else M
    delta = eps / (4 * m)
    steps = []
    log_est = log_lo = log_hi = log_qn
    exact = True
    for i in range(1, m + 1):
        kw = {} if max_nodes is None else {"max_nodes": max_nodes}
        r = estimate_ratio(_prefix(formula, i), i - 1, delta, M, mode=mode, bounds=bounds, **kw)
        if r.r_plus < 1:
            raise AssertionError(f"step {i}: ratio window below 1")
        log_est -= math.log(r.midpoint)
        log_lo -= math.log(r.inflated[1])
        log_hi -= math.log(r.inflated[0]) if r.inflated[0] > 0 else -math.inf
        exact &= r.exact_bracket
        d = r.as_dict()
        d["step"] = i
        steps.append(d)
    return CountResult(math.exp(log_est), log_est, (math.exp(log_lo), math.exp(log_hi)), steps, M, eps, exact)


class PathWalker:
    """Random root-to-leaf walks through a coupling tree driven by LP values for p-hat^X."""

    def __init__(self, tree: CouplingTree, values):
        self.tree = tree
        self.px = np.asarray([float(v) for v in values[0::2]])
        self._cum = {}

    def _cumulative(self, i: int) -> np.ndarray:
        cum = self._cum.get(i)
        if cum is None:
            kids = list(self.tree.children(i))[1:]
            w = np.clip(self.px[kids], 0, None)
            if w.sum() <= 0:
                raise ZeroDenominator(f"node {i}: children carry no p-hat^X mass")
            cum = np.cumsum(w / w.sum())
            self._cum[i] = cum
        return cum

    def walk(self, xlp, rng: np.random.Generator):
        """Return (leaf, tau) for one walk with the given assignment as X^lp."""
        tr = self.tree
        q = tr.formula.q
        node, tau = 0, {}
        while tr.kind[node] == INTERNAL:
            px = self.px[node]
            if px <= 0:
                raise ZeroDenominator(f"p-hat^X vanishes on the walked node {node}")
            c = tr.cons[node]
            first = tr.first[node]
            xs = tuple(xlp[v] for v in c.vbl)
            if tr.side[node] == "F":
                if xs != c.forbidden:
                    node = first
                    continue
                j = int(np.searchsorted(self._cumulative(node), rng.random(), side="right"))
                j = min(j, tr.nchild[node] - 2)
                tau.update(zip(c.vbl, _cfg(j, len(c.vbl), q)))
                node = first + 1 + j
            else:
                if rng.random() * px < self.px[first]:
                    node = first
                    continue
                tau.update(zip(c.vbl, c.forbidden))
                node = first + 1 + _config_index(xs, q)
        return node, tau


def random_path(tree: CouplingTree, values, xlp, seed):
    """Leaf reached by one LP-driven walk (see PathWalker.walk)."""
    return PathWalker(tree, values).walk(xlp, make_rng(seed))[0]


class DynamicSampler:
    """One dynamic step: turn a sample of mu_{C minus c0} into an approximate sample of mu_C."""

    def __init__(self, formula: AtomicFormula, c0: int, eps: float, mode: str = "float", bounds: str = "auto",
                 M: int | None = None):
        self.formula, self.c0, self.eps = formula, c0, eps
        self.M = sampler_M(eps) if M is None else M
        delta = eps / (4 + eps)
        self.ratio = estimate_ratio(formula, c0, delta, self.M, mode=mode, bounds=bounds)
        gap = (4 + eps) / (4 + 2 * eps)
        assert self.ratio.r_minus >= gap * self.ratio.r_plus * (1 - 1e-12)
        self.walker = PathWalker(self.ratio.tree, self.ratio.solution)
        self._fallback = None
        self.fallbacks = 0

    def fallback(self) -> tuple:
        if self._fallback is None:
            self._fallback = first_solution(self.formula)
        return self._fallback

    def step(self, sigma_in, rng: np.random.Generator) -> tuple:
        leaf, tau = self.walker.walk(sigma_in, rng)
        if self.ratio.tree.kind[leaf] != COUP:
            self.fallbacks += 1
            return self.fallback()
        out = list(sigma_in)
        for v, a in tau.items():
            out[v] = a
        out = tuple(out)
        if not evaluate(self.formula, out):
            self.fallbacks += 1
            return self.fallback()
        return out


def dynamic_sample_step(formula: AtomicFormula, c0: int, sigma_in, eps: float, seed, mode: str = "float") -> tuple:
    return DynamicSampler(formula, c0, eps, mode).step(tuple(sigma_in), make_rng(seed))


class Sampler:
    """Chain of dynamic steps adding constraints in id order, each at error eps/m.

    Trees and LP solutions are built once, so repeated runs only walk paths.
    """

    def __init__(self, formula: AtomicFormula, eps: float, mode: str = "float", bounds: str = "auto"):
        o = get_oracle(formula)
        if not o.omega():
            raise Unsatisfiable("formula has no satisfying assignment")
        self.formula, self.eps = formula, eps
        m = formula.m
        self.steps = [DynamicSampler(_prefix(formula, i), i - 1, eps / m, mode, bounds) for i in range(1, m + 1)]

    def run(self, rng: np.random.Generator) -> tuple:
        f = self.formula
        sigma = tuple(int(a) for a in rng.integers(0, f.q, size=f.n))
        for step in self.steps:
            sigma = step.step(sigma, rng)
        return sigma

    def summary(self) -> dict:
        return {"eps": self.eps, "steps": [{"M": s.M, "r_minus": s.ratio.r_minus, "r_plus": s.ratio.r_plus,
                                            "nodes": s.ratio.tree.size, "fallbacks": s.fallbacks}
                                           for s in self.steps]}


def sample(formula: AtomicFormula, eps: float, seed, mode: str = "float") -> tuple:
    return Sampler(formula, eps, mode).run(make_rng(seed))
