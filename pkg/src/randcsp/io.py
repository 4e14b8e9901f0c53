"""JSON and DIMACS CNF reading and writing."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .csp import AtomicFormula
from .errors import InputError


def to_dict(formula: AtomicFormula) -> dict:
    return {
        "n": formula.n,
        "q": formula.q,
        "constraints": [{"vbl": list(c.vbl), "forbidden": list(c.forbidden)} for c in formula.constraints],
    }


def from_dict(data) -> AtomicFormula:
    try:
        n, q = int(data["n"]), int(data["q"])
        cons = tuple((tuple(int(v) for v in c["vbl"]), tuple(int(a) for a in c["forbidden"])) for c in data["constraints"])
        return AtomicFormula(n, q, cons)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"bad instance: {exc}") from exc


def to_json(formula: AtomicFormula) -> str:
    return json.dumps(to_dict(formula), sort_keys=True)


def from_json(text: str) -> AtomicFormula:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed JSON: {exc}") from exc
    return from_dict(data)


def to_dimacs(formula: AtomicFormula) -> str:
    """CNF text; forbidden value 0 on v becomes literal v+1, value 1 becomes -(v+1)."""
    if formula.q != 2:
        raise InputError("DIMACS export needs q = 2")
    lines = [f"p cnf {formula.n} {formula.m}"]
    for c in formula.constraints:
        lits = [(v + 1) if a == 0 else -(v + 1) for v, a in zip(c.vbl, c.forbidden)]
        lines.append(" ".join(map(str, lits)) + " 0")
    return "\n".join(lines) + "\n"


def from_dimacs(text: str) -> AtomicFormula:
    n = None
    clauses, cur = [], []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line[0] in "c%":
            continue
        if line.startswith("p"):
            parts = line.split()
            if len(parts) < 4 or parts[1] != "cnf":
                raise InputError(f"bad problem line: {line!r}")
            n = int(parts[2])
            continue
        try:
            toks = [int(t) for t in line.split()]
        except ValueError as exc:
            raise InputError(f"bad clause line: {line!r}") from exc
        for t in toks:
            if t == 0:
                clauses.append(cur)
                cur = []
            else:
                cur.append(t)
    if cur:
        clauses.append(cur)
    if n is None:
        raise InputError("missing 'p cnf' line")
    cons, tautologies = [], 0
    for lits in clauses:
        forb, taut = {}, False
        for lit in lits:
            v, a = abs(lit) - 1, 1 if lit < 0 else 0
            if not 0 <= v < n:
                raise InputError(f"literal {lit} out of range")
            if forb.get(v, a) != a:
                taut = True
                break
            forb[v] = a
        if taut:
            tautologies += 1
            continue
        vbl = tuple(sorted(forb))
        cons.append((vbl, tuple(forb[v] for v in vbl)))
    return AtomicFormula(n, 2, tuple(cons), {"model": "dimacs", "clauses": len(clauses), "tautologies": tautologies})


def load_instance(path) -> AtomicFormula:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    stripped = text.lstrip()
    if p.suffix.lower() in (".cnf", ".dimacs") or stripped.startswith(("p ", "c")):
        return from_dimacs(text)
    return from_json(text)


def instance_hash(formula: AtomicFormula) -> str:
    return hashlib.sha256(to_json(formula).encode()).hexdigest()[:16]
