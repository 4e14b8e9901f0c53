"""Truncated coupling tree, its linear program, and LP-certified ratio windows.

Nodes live in flat lists indexed by node id.  Children of a node are
contiguous: slot 0 is the "add constraint" child and slot 1 + j is the
assignment child for the j-th configuration of vbl(c) in lexicographic order.
Only what downstream code needs is stored per node; the full state tuple of
any node can be rebuilt by replaying the path from the root (``node_state``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial
from fractions import Fraction
from itertools import product

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .coupling import EMPTY_TREE, initial_state, next_choice, repin, tree_extend
from .csp import AtomicFormula, build_graphs
from .errors import BudgetExceeded, NoFeasibleCell, NumericalFailure, Unsatisfiable
from .oracle import DEFAULT_BUDGET, get_oracle, marginal_bound

INTERNAL, COUP, TRUN, INVALID = 0, 1, 2, 3
KIND_NAMES = {INTERNAL: "Internal", COUP: "LeafCoup", TRUN: "LeafTrun", INVALID: "LeafInvalid"}
DEFAULT_MAX_NODES = 3_000_000


@dataclass
class CouplingTree:
    formula: AtomicFormula
    c0: int
    M: int
    parent: list = field(default_factory=list)
    slot: list = field(default_factory=list)
    depth: list = field(default_factory=list)
    kind: list = field(default_factory=list)
    side: list = field(default_factory=list)
    cons: list = field(default_factory=list)
    first: list = field(default_factory=list)
    nchild: list = field(default_factory=list)
    count_E: list = field(default_factory=list)
    count_F: list = field(default_factory=list)
    viol_E: list = field(default_factory=list)
    viol_F: list = field(default_factory=list)
    truncated: list = field(default_factory=list)
    tree_vars: list = field(default_factory=list)
    z_minus: int = 0
    z: int = 0
    max_degree: int = 0
    _static: object = None

    @property
    def size(self) -> int:
        return len(self.parent)

    def children(self, i: int) -> range:
        return range(self.first[i], self.first[i] + self.nchild[i])

    def leaves(self, kind=None) -> list:
        if kind is None:
            return [i for i, k in enumerate(self.kind) if k != INTERNAL]
        return [i for i, k in enumerate(self.kind) if k == kind]

    @property
    def has_truncation(self) -> bool:
        return any(self.truncated)

    @property
    def max_depth(self) -> int:
        return max(self.depth)

    @property
    def depth_bound(self) -> int:
        return self.M * self.max_degree * self.formula.k + 1

    def summary(self) -> dict:
        counts = {KIND_NAMES[k]: 0 for k in KIND_NAMES}
        for k in self.kind:
            counts[KIND_NAMES[k]] += 1
        return {"nodes": self.size, "depth": self.max_depth, "depth_bound": self.depth_bound,
                "max_branching": max(self.nchild), "M": self.M, "c0": self.c0, "kinds": counts}


def _config_index(values, q: int) -> int:
    idx = 0
    for a in values:
        idx = idx * q + a
    return idx


def build_coupling_tree(formula: AtomicFormula, c0: int, M: int, max_nodes: int = DEFAULT_MAX_NODES,
                        budget: int = DEFAULT_BUDGET) -> CouplingTree:
    """Materialize the M-truncated coupling tree rooted at (C minus c0, C, empty, ...)."""
    if M < 1:
        raise ValueError("M must be at least 1")
    o = get_oracle(formula, budget)
    E, F, mE, mF = initial_state(formula, c0, o)
    if not mF:
        raise Unsatisfiable("formula has no satisfying assignment")
    tr = CouplingTree(formula, c0, M)
    tr.z_minus, tr.z = mE.bit_count(), mF.bit_count()
    g = build_graphs(formula)
    tr.max_degree = g.max_degree
    q = formula.q
    cons = formula.constraints

    def new_node(par, slot, dep, Es, Ft, vE, vF, T, mE, mF):
        i = len(tr.parent)
        if i >= max_nodes:
            raise BudgetExceeded(f"coupling tree exceeds {max_nodes} nodes", used=i)
        tr.parent.append(par)
        tr.slot.append(slot)
        tr.depth.append(dep)
        tr.count_E.append(mE.bit_count())
        tr.count_F.append(mF.bit_count())
        tr.viol_E.append(vE)
        tr.viol_F.append(vF)
        trunc = len(T) >= M
        tr.truncated.append(trunc)
        tr.tree_vars.append(T.variables() if trunc else None)
        if vE or vF:
            k = INVALID
        elif Es == Ft:
            k = COUP
        elif trunc:
            k = TRUN
        else:
            k = INTERNAL
        tr.kind.append(k)
        tr.side.append(None)
        tr.cons.append(None)
        tr.first.append(-1)
        tr.nchild.append(0)
        return i, k

    root, k = new_node(-1, 0, 0, E, F, False, False, EMPTY_TREE, mE, mF)
    stack = [(root, E, F, EMPTY_TREE, mE, mF)] if k == INTERNAL else []
    while stack:
        i, Es, Ft, T, mE, mF = stack.pop()
        side, c = next_choice(Es, Ft)
        tr.side[i] = side
        tr.cons[i] = c
        dep = tr.depth[i] + 1
        sat_c = o.sat(c)
        T2 = tree_extend(T, cons[c.origin])
        kids = []
        if side == "F":
            kid = new_node(i, 0, dep, Es | {c}, Ft, False, False, T, mE & sat_c, mF)
            kids.append((kid, Es | {c}, Ft, T, mE & sat_c, mF))
            pi = c.forbidden
            Es2, vE = repin(Es, dict(zip(c.vbl, pi)))
            mE2 = mE & o.assign_on(c.vbl, pi)
            for j, rho in enumerate(product(range(q), repeat=len(c.vbl))):
                Ft2, vF = repin(Ft, dict(zip(c.vbl, rho)))
                mF2 = mF & o.assign_on(c.vbl, rho)
                kid = new_node(i, j + 1, dep, Es2, Ft2, vE, vF, T2, mE2, mF2)
                kids.append((kid, Es2, Ft2, T2, mE2, mF2))
        else:
            kid = new_node(i, 0, dep, Es, Ft | {c}, False, False, T, mE, mF & sat_c)
            kids.append((kid, Es, Ft | {c}, T, mE, mF & sat_c))
            rho = c.forbidden
            Ft2, vF = repin(Ft, dict(zip(c.vbl, rho)))
            mF2 = mF & o.assign_on(c.vbl, rho)
            for j, pi in enumerate(product(range(q), repeat=len(c.vbl))):
                Es2, vE = repin(Es, dict(zip(c.vbl, pi)))
                mE2 = mE & o.assign_on(c.vbl, pi)
                kid = new_node(i, j + 1, dep, Es2, Ft2, vE, vF, T2, mE2, mF2)
                kids.append((kid, Es2, Ft2, T2, mE2, mF2))
        tr.first[i] = kids[0][0][0]
        tr.nchild[i] = len(kids)
        for (idx, kind), *state in reversed(kids):
            if kind == INTERNAL:
                stack.append((idx, *state))
    return tr


@dataclass
class NodeState:
    E: list
    F: list
    sigma: dict
    tau: dict
    tree: object
    witness: dict


def node_state(tree: CouplingTree, i: int) -> NodeState:
    """Rebuild (E, F, sigma, tau, T, witness) for node i by replaying its root path."""
    path = []
    while tree.parent[i] >= 0:
        path.append(i)
        i = tree.parent[i]
    formula, q = tree.formula, tree.formula.q
    E = [c.pinned() for c in formula.constraints if c.id != tree.c0]
    F = [c.pinned() for c in formula.constraints]
    sigma, tau, witness, T = {}, {}, {}, EMPTY_TREE
    node = i
    for child in reversed(path):
        c, side, s = tree.cons[node], tree.side[node], tree.slot[child]
        if s == 0:
            (E if side == "F" else F).append(c)
        else:
            cfg = list(product(range(q), repeat=len(c.vbl)))[s - 1]
            if side == "F":
                pi, rho, wit = c.forbidden, cfg, cfg
            else:
                pi, rho, wit = cfg, c.forbidden, cfg
            sigma.update(zip(c.vbl, pi))
            tau.update(zip(c.vbl, rho))
            witness.update(zip(c.vbl, wit))
            T = tree_extend(T, formula.constraints[c.origin])
        node = child
    return NodeState(E, F, sigma, tau, T, witness)


def iter_node_states(tree: CouplingTree):
    """Yield (node, NodeState) for every node in depth-first order, replaying incrementally."""
    formula, q = tree.formula, tree.formula.q
    E0 = tuple(c.pinned() for c in formula.constraints if c.id != tree.c0)
    F0 = tuple(c.pinned() for c in formula.constraints)
    stack = [(0, E0, F0, {}, {}, EMPTY_TREE, {})]
    while stack:
        i, E, F, sigma, tau, T, wit = stack.pop()
        yield i, NodeState(list(E), list(F), sigma, tau, T, wit)
        if tree.kind[i] != INTERNAL:
            continue
        c, side = tree.cons[i], tree.side[i]
        T2 = tree_extend(T, formula.constraints[c.origin])
        for s, child in enumerate(tree.children(i)):
            if s == 0:
                if side == "F":
                    stack.append((child, E + (c,), F, sigma, tau, T, wit))
                else:
                    stack.append((child, E, F + (c,), sigma, tau, T, wit))
                continue
            cfg = _cfg(s - 1, len(c.vbl), q)
            pi, rho = (c.forbidden, cfg) if side == "F" else (cfg, c.forbidden)
            s2, t2, w2 = dict(sigma), dict(tau), dict(wit)
            s2.update(zip(c.vbl, pi))
            t2.update(zip(c.vbl, rho))
            w2.update(zip(c.vbl, cfg))
            stack.append((child, E, F, s2, t2, T2, w2))


def _cfg(index: int, length: int, q: int) -> tuple:
    out = []
    for _ in range(length):
        index, a = divmod(index, q)
        out.append(a)
    return tuple(reversed(out))


# -- ground truth -------------------------------------------------------------

@dataclass
class MarginalGroundTruth:
    """Exact p^X = mu_C(F and tau) and p^Y = mu_{C minus c0}(E and sigma) per node."""

    pX: list
    pY: list
    ratio: Fraction


def true_solution(tree: CouplingTree) -> MarginalGroundTruth:
    pX = [Fraction(c, tree.z) for c in tree.count_F]
    pY = [Fraction(c, tree.z_minus) for c in tree.count_E]
    return MarginalGroundTruth(pX, pY, Fraction(tree.z_minus, tree.z))


def node_identity_violations(tree: CouplingTree, truth: MarginalGroundTruth, recount: bool = True) -> list:
    """Nodes where p^X |Omega^{E,sigma}| / |Omega^{C-c0}| != p^Y |Omega^{F,tau}| / |Omega^C|.

    With ``recount`` the two Omega sizes are recomputed from the replayed node
    state with fresh oracle queries instead of the masks used to build the tree.
    """
    o = get_oracle(tree.formula)
    bad = []
    for i, st in iter_node_states(tree) if recount else ((i, None) for i in range(tree.size)):
        if recount:
            ce = o.satisfying(st.E, st.sigma).bit_count()
            cf = o.satisfying(st.F, st.tau).bit_count()
        else:
            ce, cf = tree.count_E[i], tree.count_F[i]
        if truth.pX[i] * Fraction(ce, tree.z_minus) != truth.pY[i] * Fraction(cf, tree.z):
            bad.append(i)
    return bad


# -- the linear program ---------------------------------------------------------

def truncation_bounds(tree: CouplingTree, mode: str = "auto", params=None) -> dict:
    """Upper bound per truncated leaf.

    ``auto`` uses the good-vertex marginal bound when its base is positive and 1
    otherwise; ``trivial`` always uses 1; ``strict`` raises if the bound is undefined.
    """
    out = {}
    leaves = [i for i in range(tree.size) if tree.truncated[i] and tree.kind[i] != INVALID]
    if not leaves:
        return out
    if mode == "trivial":
        return {i: Fraction(1) for i in leaves}
    from .structure import derive_params, identify_bad
    from .generators import hypergraph_of

    f = tree.formula
    params = params or derive_params(f.k, max(f.density, 1e-12), f.q)
    H = hypergraph_of(f)
    good = identify_bad(H, range(f.n), params.eps1, params.p1, params.alpha, k=params.k).vgood
    for i in leaves:
        vt = tree.tree_vars[i]
        b = marginal_bound(f.q, params.k, len(vt), len(vt & good), params)
        if b is None:
            if mode == "strict":
                raise ValueError("truncation bound undefined: 1 - e*q^{-(1-eps1)k} <= 0")
            out[i] = Fraction(1)
        else:
            out[i] = Fraction(1) if b >= 1 else Fraction(b)
    return out


@dataclass
class _Static:
    eq_rows: list
    eq_cols: list
    eq_vals: list
    eq_rhs: list
    eq_labels: list
    upper: list
    coup: list
    bounds_mode: str


def _static_part(tree: CouplingTree, bounds_mode: str, params) -> _Static:
    if tree._static is not None and tree._static.bounds_mode == bounds_mode and params is None:
        return tree._static
    rows, cols, vals, rhs, labels = [], [], [], [], []

    def eq(terms, b, label):
        r = len(rhs)
        for col, v in terms:
            rows.append(r)
            cols.append(col)
            vals.append(v)
        rhs.append(b)
        labels.append(label)

    X = lambda i: 2 * i
    Y = lambda i: 2 * i + 1
    eq([(X(0), 1)], 1, ("I", 0, "root x"))
    eq([(Y(0), 1)], 1, ("I", 0, "root y"))
    coup = []
    for i in range(tree.size):
        k = tree.kind[i]
        if k == INTERNAL:
            kids = list(tree.children(i))
            add, rest = kids[0], kids[1:]
            if tree.side[i] == "F":
                eq([(X(i), 1), (X(add), -1)], 0, ("IIa", i, "x add"))
                eq([(X(i), 1)] + [(X(r), -1) for r in rest], 0, ("IIa", i, "x sum"))
                for r in rest:
                    eq([(Y(i), 1), (Y(add), -1), (Y(r), -1)], 0, ("IIa", i, f"y child {r}"))
            else:
                for r in rest:
                    eq([(X(i), 1), (X(add), -1), (X(r), -1)], 0, ("IIb", i, f"x child {r}"))
                eq([(Y(i), 1), (Y(add), -1)], 0, ("IIb", i, "y add"))
                eq([(Y(i), 1)] + [(Y(r), -1) for r in rest], 0, ("IIb", i, "y sum"))
        elif k == COUP:
            coup.append(i)
        elif k == INVALID:
            if tree.viol_E[i]:
                eq([(Y(i), 1)], 0, ("IIIb", i, "y zero"))
            if tree.viol_F[i]:
                eq([(X(i), 1)], 0, ("IIIb", i, "x zero"))
    upper = [Fraction(1)] * (2 * tree.size)
    for i, b in truncation_bounds(tree, bounds_mode, params).items():
        upper[X(i)] = upper[Y(i)] = b
    st = _Static(rows, cols, vals, rhs, labels, upper, coup, bounds_mode)
    if params is None:
        tree._static = st
    return st


@dataclass
class LpInstance:
    """Rows of the LP as (group, node, description) labels plus sparse coefficient data.

    Variables: 2*i is p-hat^X and 2*i+1 is p-hat^Y of node i.  ``ub`` rows read
    ``terms <= rhs``; r_plus None means no upper ratio constraint.
    """

    tree: CouplingTree
    r_minus: Fraction
    r_plus: Fraction | None
    static: _Static
    ub_terms: list
    ub_labels: list

    @property
    def nvars(self) -> int:
        return 2 * self.tree.size

    @property
    def n_eq(self) -> int:
        return len(self.static.eq_rhs)

    def row_counts(self) -> dict:
        out = {}
        for g, _, _ in self.static.eq_labels + self.ub_labels:
            out[g] = out.get(g, 0) + 1
        out["IV"] = sum(1 for i in range(self.tree.size)
                        if self.static.upper[2 * i] < 1 or (self.tree.truncated[i] and self.tree.kind[i] != INVALID))
        return out

    def matrices(self):
        st = self.static
        n = self.nvars
        A_eq = sparse.csr_matrix((np.array(st.eq_vals, float), (st.eq_rows, st.eq_cols)), shape=(len(st.eq_rhs), n))
        b_eq = np.array(st.eq_rhs, float)
        r, c, v = [], [], []
        for j, terms in enumerate(self.ub_terms):
            for col, val in terms:
                r.append(j)
                c.append(col)
                v.append(float(val))
        A_ub = sparse.csr_matrix((v, (r, c)), shape=(len(self.ub_terms), n)) if self.ub_terms else None
        b_ub = np.zeros(len(self.ub_terms)) if self.ub_terms else None
        ub = np.array([float(u) for u in st.upper])
        return A_eq, b_eq, A_ub, b_ub, ub


def _frac(r):
    if r is None or isinstance(r, Fraction):
        return r
    if isinstance(r, float) and math.isinf(r):
        return None
    return Fraction(r)


def build_lp(tree: CouplingTree, r_minus=0, r_plus=None, bounds: str = "auto", params=None) -> LpInstance:
    """LP for the tree at ratio window [r_minus, r_plus]; r_plus None stands for infinity."""
    r_minus, r_plus = _frac(r_minus), _frac(r_plus)
    if r_minus < 0 or (r_plus is not None and r_plus < r_minus):
        raise ValueError("need 0 <= r_minus <= r_plus")
    st = _static_part(tree, bounds, params)
    terms, labels = [], []
    for i in st.coup:
        if r_minus > 0:
            terms.append([(2 * i + 1, r_minus), (2 * i, -1)])
            labels.append(("IIIa", i, "r- y <= x"))
        if r_plus is not None:
            terms.append([(2 * i, 1), (2 * i + 1, -r_plus)])
            labels.append(("IIIa", i, "x <= r+ y"))
    return LpInstance(tree, r_minus, r_plus, st, terms, labels)


def check_solution(lp: LpInstance, values, exact: bool = True, tol: float = 1e-9) -> list:
    """Violated rows as (group, node, description, excess); empty list means feasible."""
    st = lp.static
    if exact:
        vals = [v if isinstance(v, Fraction) else Fraction(v) for v in values]
        tol_ = 0
    else:
        vals = [float(v) for v in values]
        tol_ = tol
    bad = []
    for j, u in enumerate(st.upper):
        v = vals[j]
        if v < -tol_ or v - (u if exact else float(u)) > tol_:
            bad.append(("I" if u == 1 else "IV", j // 2, "x" if j % 2 == 0 else "y", v))
    acc = [0] * len(st.eq_rhs)
    for r, c, v in zip(st.eq_rows, st.eq_cols, st.eq_vals):
        acc[r] += v * vals[c]
    for r, (a, b) in enumerate(zip(acc, st.eq_rhs)):
        if abs(a - b) > tol_:
            bad.append(st.eq_labels[r] + (a - b,))
    for terms, label in zip(lp.ub_terms, lp.ub_labels):
        s = sum((val if exact else float(val)) * vals[c] for c, val in terms)
        if s > tol_:
            bad.append(label + (s,))
    return bad


def truth_vector(truth: MarginalGroundTruth) -> list:
    out = []
    for x, y in zip(truth.pX, truth.pY):
        out += [x, y]
    return out


@dataclass
class LpResult:
    feasible: bool
    values: object = None
    certificate: object = None
    exact: bool = False


def _solve_float(lp: LpInstance, tol: float):
    A_eq, b_eq, A_ub, b_ub, ub = lp.matrices()
    n = lp.nvars
    res = linprog(np.zeros(n), A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                  bounds=np.column_stack([np.zeros(n), ub]), method="highs",
                  options={"primal_feasibility_tolerance": 1e-10, "presolve": True})
    if res.status == 0:
        return True, np.clip(res.x, 0, ub)
    if res.status == 2:
        return False, None
    raise NumericalFailure(f"LP solver status {res.status}: {res.message}")


def lp_feasible(lp: LpInstance, mode: str = "float", tol: float = 1e-9) -> LpResult:
    """Decide feasibility.

    ``float`` trusts the solver up to ``tol`` and re-checks every row.
    ``exact`` certifies the verdict in rational arithmetic: a feasible verdict
    carries an exact witness, an infeasible one an exactly verified Farkas
    certificate.  When neither can be certified NumericalFailure is raised.
    """
    feasible, x = _solve_float(lp, tol)
    if mode == "float":
        if feasible:
            if check_solution(lp, x, exact=False, tol=tol):
                raise NumericalFailure("solver returned a point violating rows beyond tolerance")
            return LpResult(True, x)
        return LpResult(False)
    if mode != "exact":
        raise ValueError(f"unknown mode {mode!r}")
    if feasible:
        w = _exact_witness(lp, x)
        if w is None:
            w = next((v for v in map(partial(_exact_witness, lp), _interior_points(lp)) if v is not None), None)
        if w is None:
            raise NumericalFailure("could not certify the feasible point in exact arithmetic")
        return LpResult(True, w, exact=True)
    cert = _farkas(lp)
    if cert is None:
        raise NumericalFailure("could not certify infeasibility in exact arithmetic")
    return LpResult(False, certificate=cert, exact=True)


def _rat(v: float) -> Fraction:
    return Fraction(max(float(v), 0.0)).limit_denominator(10 ** 12)


def _exact_witness(lp: LpInstance, x) -> list | None:
    """Round a float solution top-down so every equality holds exactly, then verify."""
    tree = lp.tree
    vals = [Fraction(0)] * lp.nvars
    vals[0] = vals[1] = Fraction(1)
    order = [0]
    while order:
        i = order.pop()
        if tree.kind[i] != INTERNAL:
            continue
        kids = list(tree.children(i))
        add, rest = kids[0], kids[1:]
        # the side whose mass is split across children, and the side that is shared
        sx, sy = (0, 1) if tree.side[i] == "F" else (1, 0)
        total = vals[2 * i + sx]
        w = [_rat(x[2 * r + sx]) for r in rest]
        s = sum(w)
        vals[2 * add + sx] = total
        for r, wr in zip(rest, w):
            vals[2 * r + sx] = total * wr / s if s > 0 else total / len(rest)
        shared = vals[2 * i + sy]
        t = min(_rat(x[2 * add + sy]), shared)
        zeroed = tree.viol_E if sy == 1 else tree.viol_F
        if any(zeroed[r] for r in rest) or abs(float(shared - t)) < 1e-9:
            t = shared
        vals[2 * add + sy] = t
        for r in rest:
            vals[2 * r + sy] = shared - t
        order.extend(kids)
    return vals if not check_solution(lp, vals, exact=True) else None


def _interior_points(lp: LpInstance):
    """Re-solve with the coupled windows and upper bounds pulled slightly inward.

    Vertices of the original LP sit on tight rows that rational rounding can
    break, so points of progressively less shrunk LPs are tried.
    """
    r_lo, r_hi = lp.r_minus, lp.r_plus
    n = lp.nvars
    for rel in (Fraction(1, 8), Fraction(1, 10 ** 4), Fraction(1, 10 ** 7)):
        if r_hi is not None and r_hi > r_lo:
            gap = (r_hi - r_lo) * rel
            lo, hi = r_lo + gap, r_hi - gap
        else:
            lo = r_lo * (1 + rel / 8) if r_lo > 0 and r_hi is None else r_lo
            hi = r_hi * (1 - rel / 8) if r_hi is not None and r_hi > r_lo else r_hi
        shrunk = build_lp(lp.tree, lo, hi, lp.static.bounds_mode)
        A_eq, b_eq, A_ub, b_ub, ub = shrunk.matrices()
        ub = np.where(ub < 1, ub * (1 - 1e-9), ub)
        res = linprog(np.zeros(n), A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                      bounds=np.column_stack([np.zeros(n), ub]), method="highs")
        if res.status == 0:
            yield np.clip(res.x, 0, ub)


@dataclass
class FarkasCertificate:
    eq_mult: list
    ub_mult: list
    bound_mult: dict
    value: Fraction


def _farkas(lp: LpInstance) -> FarkasCertificate | None:
    """Find and verify multipliers proving infeasibility.

    With lam free, mu >= 0, w >= 0: if A_eq'lam + A_ub'mu + w >= 0 componentwise
    and b_eq'lam + b_ub'mu + u'w < 0, no x in [0, u] satisfies the system.
    """
    A_eq, b_eq, A_ub, b_ub, ub = lp.matrices()
    n, ne = lp.nvars, A_eq.shape[0]
    nu = 0 if A_ub is None else A_ub.shape[0]
    blocks = [A_eq.T]
    if nu:
        blocks.append(A_ub.T)
    blocks.append(sparse.identity(n, format="csr"))
    G = -sparse.hstack(blocks, format="csr")
    cost = np.concatenate([b_eq, b_ub if nu else np.zeros(0), ub])
    bnds = [(-1, 1)] * ne + [(0, 1)] * nu + [(0, None)] * n
    res = linprog(cost, A_ub=G, b_ub=np.zeros(n), bounds=bnds, method="highs")
    if res.status != 0 or res.fun > -1e-9:
        return None
    lam = [Fraction(v).limit_denominator(10 ** 9) for v in res.x[:ne]]
    mu = [max(Fraction(v).limit_denominator(10 ** 9), Fraction(0)) for v in res.x[ne:ne + nu]]
    st = lp.static
    s = [Fraction(0)] * n
    for r, c, v in zip(st.eq_rows, st.eq_cols, st.eq_vals):
        if lam[r]:
            s[c] += v * lam[r]
    for j, terms in enumerate(lp.ub_terms):
        if mu[j]:
            for c, v in terms:
                s[c] += v * mu[j]
    w = {c: -sc for c, sc in enumerate(s) if sc < 0}
    value = sum(l * b for l, b in zip(lam, st.eq_rhs)) + sum(w[c] * st.upper[c] for c in w)
    if value >= 0:
        return None
    return FarkasCertificate(lam, mu, w, value)


# -- ratio estimation -------------------------------------------------------------

@dataclass
class RatioResult:
    r_minus: float
    r_plus: float
    inflated: tuple
    exact_bracket: bool
    cell: int
    delta: float
    M: int
    solves: int
    tree: CouplingTree = field(repr=False, default=None)
    solution: object = field(repr=False, default=None)

    @property
    def midpoint(self) -> float:
        return (self.r_minus + self.r_plus) / 2

    def as_dict(self) -> dict:
        return {"r_minus": self.r_minus, "r_plus": self.r_plus, "inflated": list(self.inflated),
                "exact_bracket": self.exact_bracket, "delta": self.delta, "M": self.M, "solves": self.solves,
                "tree": self.tree.summary() if self.tree else None}


def estimate_ratio(formula: AtomicFormula, c0: int, eps: float, M: int, mode: str = "float",
                   bounds: str = "auto", tree: CouplingTree | None = None,
                   max_nodes: int = DEFAULT_MAX_NODES) -> RatioResult:
    """Find a feasible cell [r_j, r_{j+1}] of the grid r_j = (1+eps)^j.

    Bisection locates the largest j with (r_j, inf) feasible and the smallest
    j' with (0, r_j') feasible; candidate cells between them are tried from
    the middle outward and the first feasible one is returned.
    """
    tree = tree or build_coupling_tree(formula, c0, M, max_nodes=max_nodes)
    base = 1 + eps
    solves = 0
    cache = {}

    def feas(lo, hi):
        nonlocal solves
        key = (lo, hi)
        if key not in cache:
            solves += 1
            rl = 0 if lo is None else Fraction(base) ** lo
            rh = None if hi is None else Fraction(base) ** hi
            cache[key] = lp_feasible(build_lp(tree, rl, rh, bounds), mode)
        return cache[key]

    top = max(1, math.ceil(math.log(formula.q ** max(formula.k, 1)) / math.log(base)))
    while feas(top, None).feasible:
        top *= 2
        if top > 10 ** 7:
            raise NoFeasibleCell("ratio search diverged")
    # largest j with (r_j, inf) feasible; j = 0 is feasible because the ratio is >= 1
    lo, hi = 0, top
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if feas(mid, None).feasible:
            lo = mid
        else:
            hi = mid
    j_lo = lo
    # smallest j with (0, r_j) feasible
    lo, hi = -1, top
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if mid >= 0 and feas(None, mid).feasible:
            hi = mid
        else:
            lo = mid
    j_up = hi
    start = max(j_up - 1, 0)
    cands = list(range(start, j_lo + 1))
    centre = start + (len(cands) - 1) / 2
    cands.sort(key=lambda j: (abs(j - centre), j))
    for j in cands:
        res = feas(j, j + 1)
        if res.feasible:
            rm, rp = base ** j, base ** (j + 1)
            slack = 2 * 2.0 ** (-M)
            return RatioResult(rm, rp, ((1 - slack) * rm, (1 + slack) * rp), not tree.has_truncation, j, eps, M,
                               solves, tree, res.values)
    raise NoFeasibleCell("no feasible cell between the bisection bounds")


def truncation_mass(tree: CouplingTree, values=None) -> tuple:
    """Both truncated-leaf averages, evaluated exactly (values default to the ground truth)."""
    if values is None:
        truth = true_solution(tree)
        vx, vy = truth.pX, truth.pY
    else:
        vx, vy = values[0::2], values[1::2]
    sx = sy = Fraction(0)
    for i in range(tree.size):
        if tree.truncated[i] and tree.kind[i] != INVALID:
            sx += Fraction(vx[i]) * tree.count_E[i]
            sy += Fraction(vy[i]) * tree.count_F[i]
    return sx / tree.z_minus, sy / tree.z


def export_lp(lp: LpInstance) -> str:
    """CPLEX LP text format with a zero objective."""
    def name(j):
        return f"{'x' if j % 2 == 0 else 'y'}{j // 2}"

    def expr(terms):
        parts = []
        for c, v in terms:
            v = float(v)
            parts.append(f"{'-' if v < 0 else '+'} {abs(v):.17g} {name(c)}")
        return " ".join(parts)

    st = lp.static
    rows = {}
    for r, c, v in zip(st.eq_rows, st.eq_cols, st.eq_vals):
        rows.setdefault(r, []).append((c, v))
    out = ["\\ coupling-tree LP", "Minimize", " obj: 0 x0", "Subject To"]
    for r in range(len(st.eq_rhs)):
        g, node, _ = st.eq_labels[r]
        out.append(f" e{r}_{g}_{node}: {expr(rows[r])} = {st.eq_rhs[r]}")
    for j, (terms, (g, node, _)) in enumerate(zip(lp.ub_terms, lp.ub_labels)):
        out.append(f" u{j}_{g}_{node}: {expr(terms)} <= 0")
    out.append("Bounds")
    for j, u in enumerate(st.upper):
        out.append(f" 0 <= {name(j)} <= {float(u):.17g}")
    out.append("End")
    return "\n".join(out) + "\n"
