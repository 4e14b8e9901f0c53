"""Command-line driver: ``randcsp <command> [options]``.

Exit codes: 0 ok, 2 budget exceeded, 3 unsatisfiable, 4 bad input.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

from .csp import AtomicFormula
from .errors import BudgetExceeded, EmptySupport, InputError, Unsatisfiable
from .generators import child_seeds, coloring_to_atomic, gen_ksat, gen_uniform_hypergraph, make_rng
from .io import instance_hash, load_instance, to_dimacs, to_json
from .oracle import DEFAULT_BUDGET, count_exact, get_oracle, marginal

EXIT_OK, EXIT_BUDGET, EXIT_UNSAT, EXIT_INPUT = 0, 2, 3, 4


@dataclass
class ExperimentConfig:
    command: str
    model: str
    instance: str | None
    k: int
    n: int
    m: int | None
    alpha: float | None
    q: int
    seed: int
    eps: float | None
    M: int | None
    budget: int
    work: int
    jobs: int
    mode: str
    format: str
    out: str | None

    def validate(self):
        if self.budget <= 0 or self.work <= 0 or self.jobs <= 0:
            raise InputError("budgets and --jobs must be positive")
        if self.instance is None:
            if self.m is None and self.alpha is None:
                raise InputError("give -m or --alpha, or --instance")
            if self.k < 1 or self.n < 1 or self.q < 2:
                raise InputError("need k >= 1, n >= 1, q >= 2")


def _resolve_m(cfg: ExperimentConfig) -> int:
    return cfg.m if cfg.m is not None else int(round(cfg.alpha * cfg.n))


def make_instance(cfg: ExperimentConfig) -> AtomicFormula:
    if cfg.instance is not None:
        return load_instance(cfg.instance)
    m = _resolve_m(cfg)
    if cfg.model == "ksat":
        if cfg.q != 2:
            raise InputError("the ksat model is Boolean; use -q 2")
        return gen_ksat(cfg.k, cfg.n, m, cfg.seed)
    H = gen_uniform_hypergraph(cfg.k, cfg.n, m, cfg.seed)
    return coloring_to_atomic(H, cfg.q)


# -- output -----------------------------------------------------------------

def _csv(rows: list) -> str:
    if not rows:
        return ""
    cols = list(dict.fromkeys(c for r in rows for c in r))
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({c: json.dumps(v) if isinstance(v, (list, dict)) else v for c, v in r.items()})
    return buf.getvalue()


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def emit(cfg: ExperimentConfig, report: dict, table: list, figures=None) -> None:
    """Write the report to stdout, or into the --out directory along with any figures."""
    report = _jsonable(report)
    text = _csv(_jsonable(table)) if cfg.format == "csv" else json.dumps(report, indent=2, sort_keys=True) + "\n"
    if cfg.out is None:
        sys.stdout.write(text)
        return
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    name = f"{cfg.command.replace(' ', '_')}.{cfg.format}"
    (out / name).write_text(text)
    if cfg.format == "csv":
        (out / f"{cfg.command.replace(' ', '_')}.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    for fn in figures or ():
        fn(out)
    sys.stdout.write(f"wrote {out / name}\n")


def _base(cfg: ExperimentConfig, formula: AtomicFormula, started: float) -> dict:
    return {"config": asdict(cfg), "instance_hash": instance_hash(formula),
            "instance": {"n": formula.n, "q": formula.q, "m": formula.m, "k": formula.k},
            "wall_clock": round(time.perf_counter() - started, 4)}


def _oracle_count(formula, budget):
    try:
        return count_exact(formula, budget=budget)
    except BudgetExceeded:
        return None


# -- commands ---------------------------------------------------------------

def cmd_gen(cfg, args, started):
    f = make_instance(cfg)
    text = to_dimacs(f) if (f.q == 2 and args.emit == "dimacs") else to_json(f) + "\n"
    if cfg.out:
        Path(cfg.out).parent.mkdir(parents=True, exist_ok=True)
        Path(cfg.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_check_nice(cfg, args, started):
    from .structure import derive_params, hypergraph_of, is_nice

    f = make_instance(cfg)
    H = hypergraph_of(f)
    alpha = cfg.alpha if cfg.alpha is not None else max(f.m / f.n, 1e-12)
    params = derive_params(max(f.k, 1), alpha, f.q)
    rep = is_nice(H, params, work=cfg.work, cap=args.cap, seed=cfg.seed)
    table = []
    for name, r in rep["properties"].items():
        parts = [(f"{name}.{s}", r[s]) for s in ("bad_vertices", "bad_fraction")] if "bad_vertices" in r else [(name, r)]
        table += [{"property": p, "holds": x.get("holds"), "exhaustive": x.get("exhaustive")} for p, x in parts]
    emit(cfg, _base(cfg, f, started) | {"result": rep}, table)
    return EXIT_OK


def cmd_oracle(cfg, args, started):
    f = make_instance(cfg)
    o = get_oracle(f, cfg.budget)
    Z = o.count(o.omega())
    if Z == 0:
        raise Unsatisfiable("formula has no satisfying assignment")
    rows = []
    for v in range(f.n):
        t = marginal(f, None, {}, [v], cfg.budget)
        rows.append({"v": v} | {f"p{a}": float(t[(a,)]) for a in range(f.q)})
    emit(cfg, _base(cfg, f, started) | {"result": {"Z": Z, "marginals": rows}}, rows)
    return EXIT_OK


def cmd_couple(cfg, args, started):
    from .coupling import decay_curve
    from .plotting import plot_decay

    f = make_instance(cfg)
    if not get_oracle(f, cfg.budget).omega():
        raise Unsatisfiable("formula has no satisfying assignment")
    c0 = args.c0 if args.c0 is not None else f.m - 1
    curve = decay_curve(f, c0, args.trials, args.Mmax, cfg.seed, jobs=cfg.jobs, budget=cfg.budget)
    report = _base(cfg, f, started) | {"result": curve | {"c0": c0}}
    emit(cfg, report, curve["rows"], [lambda d: plot_decay(curve, d / "decay.png")])
    return EXIT_OK


def cmd_count(cfg, args, started):
    from .counting import count
    from .lp import build_lp, export_lp
    from .plotting import plot_count_steps

    f = make_instance(cfg)
    res = count(f, cfg.eps, mode=cfg.mode, bounds=args.bounds, M=cfg.M)
    Z = _oracle_count(f, cfg.budget)
    result = res.as_dict() | {"oracle_Z": Z, "relative_error": (res.estimate / Z - 1) if Z else None}
    if args.dump_lp:
        from .counting import _prefix
        from .lp import estimate_ratio

        d = Path(args.dump_lp)
        d.mkdir(parents=True, exist_ok=True)
        for s in res.steps:
            i = s["step"]
            r = estimate_ratio(_prefix(f, i), i - 1, cfg.eps / (4 * f.m), res.M, mode="float", bounds=args.bounds)
            (d / f"step{i}.lp").write_text(export_lp(build_lp(r.tree, r.r_minus, r.r_plus, args.bounds)))
        result["lp_dir"] = str(d)
    table = [{"step": s["step"], "r_minus": s["r_minus"], "r_plus": s["r_plus"], "inflated_lo": s["inflated"][0],
              "inflated_hi": s["inflated"][1], "nodes": s["tree"]["nodes"]} for s in res.steps]
    emit(cfg, _base(cfg, f, started) | {"result": result}, table,
         [lambda d: plot_count_steps(res.steps, d / "count_steps.png")] if res.steps else [])
    return EXIT_OK


def _sample_chunk(job):
    from .counting import Sampler

    formula, eps, mode, seeds = job
    s = Sampler(formula, eps, mode)
    return [s.run(make_rng(x)) for x in seeds]


def cmd_sample(cfg, args, started):
    from .oracle import solutions
    from .plotting import plot_sample_histogram

    f = make_instance(cfg)
    if not get_oracle(f, cfg.budget).omega():
        raise Unsatisfiable("formula has no satisfying assignment")
    seeds = child_seeds(cfg.seed, args.runs)
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs) as ex:
            parts = ex.map(_sample_chunk, [(f, cfg.eps, cfg.mode, seeds[i::cfg.jobs]) for i in range(cfg.jobs)])
            draws = [x for p in parts for x in p]
    else:
        draws = _sample_chunk((f, cfg.eps, cfg.mode, seeds))
    counts = Counter(draws)
    emp = {k: c / args.runs for k, c in counts.items()}
    S = [tuple(int(a) for a in row) for row in solutions(f, cfg.budget)]
    uniform = {s: 1 / len(S) for s in S}
    tv = 0.5 * sum(abs(emp.get(s, 0) - uniform.get(s, 0)) for s in set(emp) | set(uniform))
    idx = {s: i for i, s in enumerate(S)}
    table = [{"solution": "".join(map(str, s)), "frequency": emp.get(s, 0.0), "target": 1 / len(S)} for s in S]
    result = {"runs": args.runs, "tv_to_uniform": tv, "distinct": len(counts), "Z": len(S),
              "invalid": sum(c for s, c in counts.items() if s not in uniform),
              "first": [list(d) for d in draws[: min(5, len(draws))]]}
    emit(cfg, _base(cfg, f, started) | {"result": result}, table,
         [lambda d: plot_sample_histogram({idx[s]: p for s, p in emp.items() if s in idx},
                                          {i: 1 / len(S) for i in range(len(S))}, d / "samples.png")])
    return EXIT_OK


def cmd_geometry(cfg, args, started):
    from . import geometry as g
    from .plotting import plot_replica_heatmap

    f = make_instance(cfg)
    base = _base(cfg, f, started)
    if args.what == "replica":
        rg = g.replica_symmetry_gap(f, cfg.budget).as_dict()
        table = [{"v1": u, "v2": v, "gap": x} for u, v, x in rg["pairs"]]
        emit(cfg, base | {"result": rg}, table, [lambda d: plot_replica_heatmap(f.n, rg["pairs"], d / "replica.png")])
    elif args.what == "nonrecon":
        vs = range(f.n) if args.v is None else [args.v]
        table = [{"v": v, "r": r, "far": len(g.far_set(f, v, r)), "tv": float(g.nonreconstruction_tv(f, v, r, cfg.budget))}
                 for v in vs for r in range(1, args.rmax + 1)]
        emit(cfg, base | {"result": {"rows": table}}, table)
    else:
        from .oracle import solutions

        S = solutions(f, cfg.budget)
        if len(S) == 0:
            raise Unsatisfiable("formula has no satisfying assignment")
        rng = make_rng(cfg.seed)
        M = cfg.M if cfg.M is not None else 3
        table = []
        for t, s in enumerate(child_seeds(cfg.seed, args.runs)):
            sigma = tuple(int(a) for a in S[rng.integers(len(S))])
            v = int(rng.integers(f.n))
            row = {"run": t, "v": v, "min_flip": g.check_loose(f, sigma, v, M, cfg.budget).distance}
            try:
                res = g.looseness_process(f, sigma, v, M, s, cfg.budget)
                row |= {"success": res.success, "hamming": res.hamming}
            except EmptySupport:
                row |= {"success": None, "hamming": None}
            table.append(row)
        ok = [r for r in table if r["success"]]
        emit(cfg, base | {"result": {"M": M, "runs": args.runs, "successes": len(ok), "rows": table}}, table)
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "check-nice": cmd_check_nice, "oracle": cmd_oracle, "couple": cmd_couple,
            "count": cmd_count, "sample": cmd_sample, "geometry": cmd_geometry}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_argument_group("instance")
    src.add_argument("--instance", help="DIMACS CNF or JSON instance file")
    src.add_argument("--model", choices=["ksat", "coloring"], default="ksat")
    src.add_argument("-k", type=int, default=3)
    src.add_argument("-n", type=int, default=10)
    src.add_argument("-m", type=int)
    src.add_argument("--alpha", type=float)
    src.add_argument("-q", type=int, default=2)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--budget", type=int, default=DEFAULT_BUDGET, help="max assignments the oracle enumerates")
    common.add_argument("--work", type=int, default=2_000_000, help="work budget for structural checks")
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--format", choices=["json", "csv"], default="json")
    common.add_argument("--out", help="output directory (file for gen)")
    common.add_argument("--eps", type=float, default=0.25)
    common.add_argument("--M", type=int, help="truncation override")
    common.add_argument("--mode", choices=["float", "exact"], default="float")

    p = argparse.ArgumentParser(prog="randcsp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    g = sub.add_parser("gen", parents=[common], help="generate an instance")
    g.add_argument("--emit", choices=["dimacs", "json"], default="dimacs")
    c = sub.add_parser("check-nice", parents=[common], help="structural property report")
    c.add_argument("--cap", type=int, default=4, help="largest subset size enumerated")
    sub.add_parser("oracle", parents=[common], help="exact count and marginals")
    c = sub.add_parser("couple", parents=[common], help="coupling decay curve")
    c.add_argument("--c0", type=int)
    c.add_argument("--trials", type=int, default=1000)
    c.add_argument("--Mmax", type=int, default=6)
    c = sub.add_parser("count", parents=[common], help="LP-based approximate count")
    c.add_argument("--bounds", choices=["auto", "trivial", "strict"], default="auto")
    c.add_argument("--dump-lp", help="directory for per-step LP files")
    c = sub.add_parser("sample", parents=[common], help="dynamic sampler runs")
    c.add_argument("--runs", type=int, default=1000)
    c = sub.add_parser("geometry", parents=[common], help="solution-space estimators")
    c.add_argument("what", choices=["replica", "nonrecon", "loose"])
    c.add_argument("--v", type=int)
    c.add_argument("--rmax", type=int, default=3)
    c.add_argument("--runs", type=int, default=100)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg = ExperimentConfig(
        command=args.command if args.command != "geometry" else f"geometry {args.what}",
        model=args.model, instance=args.instance, k=args.k, n=args.n, m=args.m, alpha=args.alpha, q=args.q,
        seed=args.seed, eps=args.eps, M=args.M, budget=args.budget, work=args.work, jobs=args.jobs,
        mode=args.mode, format=args.format, out=args.out)
    started = time.perf_counter()
    try:
        cfg.validate()
        return COMMANDS[args.command](cfg, args, started)
    except BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (Unsatisfiable, EmptySupport) as exc:
        print(f"unsatisfiable: {exc}", file=sys.stderr)
        return EXIT_UNSAT
    except (InputError, ValueError) as exc:
        print(f"bad input: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
