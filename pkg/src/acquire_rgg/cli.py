"""Command line entry point ``acquire-rgg``."""
from __future__ import annotations

import argparse
import gzip
import json
import sys

from . import certificates as cert
from . import experiments as exp
from . import tessellation as tess
from .engine import IllegalMoveAt, load_protocol, replay, save_protocol
from .exact import CapExceeded, edge_list_graph, exact_at
from .rgg import load_graph, sample_fixed_n, sample_poisson, save_graph


def _read_bytes(path):
    with open(path, "rb") as fh:
        return fh.read()


def _write_json(path, obj):
    text = json.dumps(obj, indent=2, sort_keys=True, default=str) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "wt", encoding="utf-8") as fh:
        fh.write(text)


def _load_any(args):
    if getattr(args, "edges", None):
        with open(args.edges, encoding="utf-8") as fh:
            return edge_list_graph(fh.read())
    return load_graph(_read_bytes(args.graph))


def cmd_gen(args):
    sampler = sample_poisson if args.poisson else sample_fixed_n
    g = sampler(args.n, args.r, args.seed)
    with open(args.out, "wb") as fh:
        fh.write(save_graph(g))
    print(f"wrote {g.n} vertices to {args.out}")
    return 0


def cmd_replay(args):
    g = _load_any(args)
    n, proto = load_protocol(_read_bytes(args.protocol))
    if n != g.n:
        print(f"protocol is for {n} vertices, graph has {g.n}", file=sys.stderr)
        return 2
    try:
        state = replay(g, proto)
    except IllegalMoveAt as exc:
        print(f"illegal: {exc}", file=sys.stderr)
        return 1
    from .engine import is_maximal
    print(json.dumps({"moves": len(proto), "residual": len(state.residual()),
                      "maximal": is_maximal(state)}))
    return 0


def cmd_upper(args):
    g = load_graph(_read_bytes(args.graph))
    if args.method == "greedy":
        proto, resid = tess.grid_protocol(g)
        report = {"format": "atreportv1", "method": "greedy", "n": g.n, "r": g.radius,
                  "residual_count": len(resid)}
    else:
        try:
            p = tess.plan(g.n, g.radius, args.c, args.eps, side=g.side,
                          strip_rows=args.strip_rows, rules=args.rules)
        except tess.PlanError as exc:
            print(f"plan: {type(exc).__name__}: {exc}", file=sys.stderr)
            return 2
        p = tess.classify(p, g)
        res = tess.full_protocol(g, p, attempt_bad=args.attempt_bad)
        proto = res.protocol
        report = res.report(p)
        report["method"] = "tessellation"
    state = replay(g, proto)
    report["replayed_residual"] = len(state.residual())
    if args.out_protocol:
        with open(args.out_protocol, "wb") as fh:
            fh.write(save_protocol(proto, g.n))
    _write_json(args.report, report)
    return 0


def cmd_lower(args):
    g = _load_any(args)
    if args.kind == "dangerous":
        c = cert.dangerous_squares(g)
    else:
        c = cert.ball_counting_cap(g, args.budget if args.budget is not None else g.n)
    _write_json(args.report, c.report(full_witness=not args.summary))
    return 0


def cmd_exact(args):
    g = _load_any(args)
    try:
        value, proto = exact_at(g, cap=args.cap)
    except CapExceeded as exc:
        print(str(exc), file=sys.stderr)
        return 2
    if args.out_protocol:
        with open(args.out_protocol, "wb") as fh:
            fh.write(save_protocol(proto, g.n))
    print(json.dumps({"n": g.n, "a_t": value, "residual": sorted(proto.declared_residual)}))
    return 0


def cmd_sweep(args):
    cfg = exp.load_config(args.config)
    if args.workers is not None:
        cfg.workers = args.workers
    records = exp.sweep_to_file(cfg, args.out)
    bad = sum(1 for r in records if r.errors)
    print(f"{len(records)} trials written to {args.out} ({bad} with recorded errors)")
    return 0


def cmd_fit(args):
    with open(args.inp, encoding="utf-8", newline="") as fh:
        records = exp.read_records(fh)
    limits = dict(exp.DEFAULT_FIT)
    if args.config:
        limits.update(exp.load_config(args.config).fit)
    try:
        res = exp.fit_scaling(
            records, args.regime, value=args.value,
            band_limit=limits["band_limit"], drift_limit=limits["drift_limit"],
            min_r=args.min_r if args.min_r is not None else limits["min_r"],
            min_seeds=args.min_seeds if args.min_seeds is not None else limits["min_seeds"],
        )
    except exp.InsufficientData as exc:
        print(f"insufficient data: {exc}", file=sys.stderr)
        return 2
    out = res.summary()
    lo, hi = limits["slope_range"]
    out["slope_range"] = [lo, hi]
    out["slope_in_range"] = lo <= res.slope <= hi
    print(json.dumps(out, indent=2))
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="acquire-rgg",
                                 description="Total acquisition on random geometric graphs")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="sample an instance")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--poisson", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("replay", help="check a protocol file against an instance")
    p.add_argument("--graph")
    p.add_argument("--edges")
    p.add_argument("--protocol", required=True)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("upper", help="build an upper-bound protocol")
    p.add_argument("--graph", required=True)
    p.add_argument("--c", type=float, default=1e-4)
    p.add_argument("--eps", type=float, default=1e-2)
    p.add_argument("--rules", choices=("strict", "relaxed"), default="strict")
    p.add_argument("--strip-rows", type=int, default=10)
    p.add_argument("--attempt-bad", action="store_true")
    p.add_argument("--method", choices=("tessellation", "greedy"), default="tessellation")
    p.add_argument("--out-protocol")
    p.add_argument("--report")
    p.set_defaults(func=cmd_upper)

    p = sub.add_parser("lower", help="emit a lower-bound certificate")
    p.add_argument("--graph")
    p.add_argument("--edges")
    p.add_argument("--kind", choices=("dangerous", "ball"), required=True)
    p.add_argument("--budget", type=int)
    p.add_argument("--summary", action="store_true", help="omit per-vertex witness arrays")
    p.add_argument("--report")
    p.set_defaults(func=cmd_lower)

    p = sub.add_parser("exact", help="exact value for a small graph")
    p.add_argument("--graph")
    p.add_argument("--edges")
    p.add_argument("--cap", type=int, default=10)
    p.add_argument("--out-protocol")
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("sweep", help="run a Monte Carlo sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fit", help="fit the scaling law to a sweep CSV")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--regime", default="mid")
    p.add_argument("--value", default="best_upper")
    p.add_argument("--config")
    p.add_argument("--min-r", type=int)
    p.add_argument("--min-seeds", type=int)
    p.set_defaults(func=cmd_fit)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command in ("replay", "lower", "exact") and not (args.graph or args.edges):
        print("one of --graph or --edges is required", file=sys.stderr)
        return 2
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
