"""Command-line interface: analyze, estimate, oracle, simulate, bench."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time

from . import engine, simulate, suite
from .decomposition import (
    Hypergraph,
    cover_width_excluding_outputs,
    decompose,
    gyo_acyclic,
    load_decomposition,
    validate,
)
from .errors import (
    DenseLimitExceeded,
    DivisionByZero,
    DivisionInconsistency,
    PihteError,
    ResourceLimitExceeded,
    ValidationError,
)
from .estimand import flatten, parse
from .model import base_name, load_dataset, load_graph

EXIT_INPUT = 2
EXIT_INCONSISTENT = 3
EXIT_RESOURCE = 4
EXIT_MISMATCH = 5

_INPUT_ERRORS = (
    FileNotFoundError,
    IsADirectoryError,
    PermissionError,
    ValueError,
    KeyError,
)


def _read_estimand(args) -> str:
    if getattr(args, "estimand", None):
        return args.estimand
    if getattr(args, "estimand_file", None):
        with open(args.estimand_file, encoding="utf-8") as fh:
            return fh.read()
    raise ValueError("an estimand is required (--estimand or --estimand-file)")


def _parse_do(text):
    out = {}
    if not text:
        return out
    for part in text.split(","):
        name, _, value = part.partition("=")
        name = name.strip()
        if not name or not value.strip():
            raise ValueError(f"bad --do item {part!r}, expected VAR=value")
        out[name] = int(value)
    return out


def _emit(text: str, out_path):
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def _level_hypergraph(level, graph) -> Hypergraph:
    """Structural hypergraph for analyze: scopes from the flattened terms,
    domain sizes looked up through the graph (primes read the base name)."""
    edges = []
    domains = {}
    for i, term in enumerate(level.factors):
        edges.append((f"f{i}", term.scope))
        for n in term.scope:
            domains[n] = graph.domain_size(base_name(n))
    for child_id, scope in level.child_outputs:
        edges.append((f"g{child_id}", tuple(scope)))
        for n in scope:
            domains[n] = graph.domain_size(base_name(n))
    return Hypergraph(tuple(edges), domains, empty=not edges)


def cmd_analyze(args) -> int:
    hier = flatten(parse(_read_estimand(args)))
    graph = load_graph(args.graph)
    supplied = None
    levels_out = []
    start = time.monotonic()
    for level in hier.levels:
        hg = _level_hypergraph(level, graph)
        if args.decomposition and level.level_id == hier.root:
            supplied = load_decomposition(args.decomposition, hg)
            td = supplied
        else:
            td = decompose(hg, seed=args.seed, restarts=args.restarts)
        levels_out.append(
            {
                "level": level.level_id,
                "n_factors": len(level.factor_scopes),
                "n_vars": len(hg.nodes),
                "factors": [t.key() for t in level.factors]
                + [f"output(level {c})" for c, _ in level.child_outputs],
                "sum_vars": list(level.sum_vars),
                "free_vars": list(level.free_vars),
                "rename_map": [list(p) for p in level.rename_map],
                "children": list(level.children),
                "w": td.treewidth,
                "hw": td.hyperwidth,
                "hw_no_outputs": cover_width_excluding_outputs(td, hg),
                "is_hypertree": gyo_acyclic(hg)["is_hypertree"],
                "n_clusters": td.n_clusters,
                "supplied_decomposition": td is supplied,
            }
        )
    t = 1
    if args.data:
        data = load_dataset(args.data, graph)
        t = data.n_rows
    stats = [
        {"level_id": lv["level"], "w": lv["w"], "hw": lv["hw"]} for lv in levels_out
    ]
    bounds = engine.predicted_bounds(
        stats,
        t=t,
        k=max(v.domain_size for v in graph.variables),
        n=max(lv["n_vars"] for lv in levels_out),
    )
    report = {
        "depth": hier.depth,
        "levels": levels_out,
        "max_hw": max(lv["hw"] for lv in levels_out),
        "max_w": max(lv["w"] for lv in levels_out),
        "bounds": bounds,
        "wall_time": round(time.monotonic() - start, 6),
    }
    _emit(json.dumps(report, indent=2, sort_keys=True), args.out)
    return 0


def _run_estimate(args):
    graph = load_graph(args.graph)
    data = load_dataset(args.data, graph)
    hier = flatten(parse(_read_estimand(args)))
    decomps = {}
    if args.decomposition:
        level = hier.level(hier.root)
        do = _parse_do(args.do)
        hg = _structural_for_data(level, graph, data, do)
        decomps[hier.root] = load_decomposition(args.decomposition, hg)
    opts = engine.EvalOptions(
        seed=args.seed,
        restarts=args.restarts,
        do=_parse_do(args.do),
        decompositions=decomps,
    )
    return engine.pi_hte(hier, data, opts), hier, graph, data


def _structural_for_data(level, graph, data, do):
    # validation target for a user-supplied decomposition; scopes are the
    # term scopes (bound factors share them), child outputs their free vars
    return _level_hypergraph(level, graph)


def cmd_estimate(args) -> int:
    report, *_ = _run_estimate(args)
    if args.format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf)
        row = engine.run_metrics(report)
        writer.writerow(row.keys())
        writer.writerow(_format_row(row))
        _emit(buf.getvalue(), args.out)
    else:
        _emit(report.to_json(), args.out)
    return 0


def _format_row(row):
    out = []
    for key, value in row.items():
        if key == "time":
            out.append(f"{value:.3f}")
        elif isinstance(value, float):
            out.append(repr(value))
        else:
            out.append(str(value))
    return out


def _max_discrepancy(a, b):
    keys = set(dict(a.items())) | set(dict(b.items()))
    ad, bd = dict(a.items()), dict(b.items())
    max_abs = max_rel = 0.0
    for k in keys:
        x, y = ad.get(k, 0.0), bd.get(k, 0.0)
        diff = abs(x - y)
        max_abs = max(max_abs, diff)
        denom = max(abs(x), abs(y))
        if denom:
            max_rel = max(max_rel, diff / denom)
    return max_abs, max_rel


def cmd_oracle(args) -> int:
    if args.suite:
        failures = []
        worst = 0.0
        for i in range(args.suite):
            inst = suite.make_instance(args.seed + i)
            expr = parse(inst.estimand)
            got = engine.pi_hte(flatten(expr), inst.data).result
            want = engine.brute_force_eval(expr, inst.data, args.dense_limit)
            _, rel = _max_discrepancy(got, want)
            worst = max(worst, rel)
            if rel > args.tolerance:
                failures.append({"seed": inst.seed, "estimand": inst.estimand, "rel": rel})
        report = {
            "instances": args.suite,
            "tolerance": args.tolerance,
            "max_rel_discrepancy": worst,
            "failures": failures,
        }
        _emit(json.dumps(report, indent=2, sort_keys=True), args.out)
        return 0 if not failures else EXIT_MISMATCH

    if not args.graph or not args.data:
        raise ValueError("oracle needs --graph and --data unless --suite is used")
    graph = load_graph(args.graph)
    data = load_dataset(args.data, graph)
    expr = parse(_read_estimand(args))
    opts = engine.EvalOptions(seed=args.seed, restarts=args.restarts, do=_parse_do(args.do))
    got = engine.pi_hte(flatten(expr), data, opts).result
    want = engine.brute_force_eval(expr, data, args.dense_limit)
    if opts.do:
        want = want.restrict(opts.do)
    max_abs, max_rel = _max_discrepancy(got, want)
    ok = max_rel <= args.tolerance
    report = {
        "max_abs_discrepancy": max_abs,
        "max_rel_discrepancy": max_rel,
        "tolerance": args.tolerance,
        "pass": ok,
    }
    _emit(json.dumps(report, indent=2, sort_keys=True), args.out)
    return 0 if ok else EXIT_MISMATCH


def cmd_simulate(args) -> int:
    graph = load_graph(args.graph)
    cbn = simulate.random_cbn(graph, dist=args.dist, alpha=args.alpha, seed=args.seed)
    data = simulate.sample_dataset(cbn, n=args.rows, seed=args.seed + 1)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(data.columns)
    for row in data.rows:
        writer.writerow(row)
    _emit(buf.getvalue(), args.out)
    if args.cbn_out:
        with open(args.cbn_out, "w", encoding="utf-8") as fh:
            fh.write(cbn.to_json())
    return 0


def cmd_bench(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",") if s.strip()] if args.sizes else []
    if not sizes:
        raise ValueError("--sizes must list at least one sample size")
    graph = load_graph(args.graph)
    hier = flatten(parse(_read_estimand(args)))
    cbn = simulate.random_cbn(graph, dist=args.dist, alpha=args.alpha, seed=args.seed)
    rows = []
    for i, size in enumerate(sizes):
        data = simulate.sample_dataset(cbn, n=size, seed=args.seed + 1 + i)
        decomps = {}
        if args.decomposition:
            level = hier.level(hier.root)
            hg = _level_hypergraph(level, graph)
            decomps[hier.root] = load_decomposition(args.decomposition, hg)
        opts = engine.EvalOptions(
            seed=args.seed, restarts=args.restarts,
            do=_parse_do(args.do), decompositions=decomps,
        )
        report = engine.pi_hte(hier, data, opts)
        rows.append(engine.run_metrics(report))
    if args.format == "json":
        _emit(json.dumps(rows, indent=2, sort_keys=True), args.out)
    else:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(rows[0].keys())
        for row in rows:
            writer.writerow(_format_row(row))
        _emit(buf.getvalue(), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pihte",
        description="Plug-in estimand evaluation over hypertree decompositions.",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    def common(p, data=False, graph=True):
        p.add_argument("--graph", required=graph)
        if data:
            p.add_argument("--data", required=True)
        p.add_argument("--estimand")
        p.add_argument("--estimand-file")
        p.add_argument("--decomposition")
        p.add_argument("--do", default="")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--restarts", type=int, default=0)
        p.add_argument("--dense-limit", type=int, default=10**6)
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--out")

    p = sub.add_parser("analyze", help="widths and predicted bounds, no evaluation")
    common(p)
    p.add_argument("--data")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("estimate", help="evaluate the estimand against a dataset")
    common(p, data=True)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("oracle", help="cross-check against brute-force evaluation")
    common(p, graph=False)
    p.add_argument("--data")
    p.add_argument("--suite", type=int, default=0, help="run N random instances")
    p.add_argument("--tolerance", type=float, default=1e-9)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("simulate", help="draw a random CBN and sample a dataset")
    p.add_argument("--graph", required=True)
    p.add_argument("--dist", choices=("uniform", "dirichlet", "deterministic", "mixture"),
                   default="dirichlet")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rows", type=int, default=1000)
    p.add_argument("--out")
    p.add_argument("--cbn-out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="Table-style rows across sample sizes")
    common(p)
    p.add_argument("--sizes", default="")
    p.add_argument("--dist", choices=("uniform", "dirichlet", "deterministic", "mixture"),
                   default="dirichlet")
    p.add_argument("--alpha", type=float, default=1.0)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DivisionInconsistency, DivisionByZero) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INCONSISTENT
    except (ResourceLimitExceeded, DenseLimitExceeded, MemoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (PihteError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
