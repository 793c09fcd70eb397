"""Command-line entry point: ``ccnrtrl <command> ...``."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .errors import UsageError


def _cmd_run(args):
    from .config import load_config
    from .runner import run_experiment

    overrides = list(args.overrides)
    if args.workers is not None:
        overrides.append(f"workers={args.workers}")
    cfg = load_config(args.config, overrides)
    out = run_experiment(cfg, args.out)
    print(f"results in {out}")
    with open(out / "summary.csv") as fh:
        lines = fh.read().splitlines()
    for line in lines[:1] + lines[-3:]:
        print(line)
    return 0


def _cmd_verify(args):
    from .verify import verify_gradients

    tops = ["columnar", "ccn", "constructive", "tbptt"] if args.topology == "all" else [args.topology]
    ok = True
    for top in tops:
        r = verify_gradients(top, instances=args.instances, steps=args.steps, seed=args.seed,
                             fd_checks=args.fd_checks)
        status = "ok" if r["ok"] else "FAIL"
        print(f"{top:13s} instances={r['instances']:3d} max|fwd-bptt|={r['max_abs']:.3e} "
              f"max rel|fd-bptt|={r['max_fd_rel']:.3e}  {status}")
        ok &= r["ok"]
    return 0 if ok else 1


def _cmd_dump_env(args):
    from .envs.trace_pattern import TraceConfig, TracePatterning
    from .replay import write_arrays

    env = TracePatterning(TraceConfig(seed=args.seed, noise=not args.no_noise))
    obs, _, _ = env.generate(args.steps)
    h = write_arrays(args.output, obs, cumulant_index=-1,
                     meta=f"trace-patterning seed={args.seed}")
    print(f"wrote {h.count} records of width {h.width} to {args.output}")
    return 0


def _cmd_inspect(args):
    from .replay import StreamReader

    r = StreamReader(args.path)
    h = r.header
    print(f"version      {h.version}")
    print(f"width        {h.width}")
    print(f"records      {h.count}")
    print(f"terminals    {'yes' if h.has_terminal else 'no'}")
    print(f"clipped      {'yes' if h.clipped else 'no'}")
    print(f"cumulant     column {h.cumulant_column}")
    print(f"meta         {h.meta}")
    if len(r):
        obs, cum, term = r.block(0, min(len(r), args.scan))
        print(f"cumulant     mean {cum.mean():.6g}  min {cum.min():.6g}  max {cum.max():.6g}"
              f"  (first {len(cum)} records)")
        print(f"episodes     {int(term.sum())} terminal records")
        with np.printoptions(precision=4, suppress=True, linewidth=120):
            for t in range(min(args.head, len(obs))):
                print(f"  [{t}] {obs[t]}")
    return 0


def _cmd_budget(args):
    from .compute import estimate_ops, measure_ops
    from .tbptt import budget_pairs

    rows = [("columnar", dict(d=10)), ("ccn", dict(d=16, u=4)),
            ("constructive", dict(d=5)), ("tbptt", dict(d=4, k=15))]
    print(f"{'topology':13s} {'estimate':>9s}" + (f" {'measured':>9s} {'rel':>7s}" if args.measure else ""))
    for top, kw in rows:
        est = estimate_ops(top, args.m, **kw)
        line = f"{top:13s} {est:9d}"
        if args.measure:
            got = measure_ops(top, args.m, steps=args.steps, **kw)
            line += f" {got:9.0f} {got / est - 1:+7.1%}"
        print(line)
    print(f"truncation:features pairs within {args.budget} ops (+{args.tolerance:.0%}):")
    print("  " + ", ".join(f"{k}:{d}" for k, d in budget_pairs(args.budget, args.m, args.tolerance)))
    return 0


def _cmd_summarize(args):
    from .runner import summarize

    path = summarize(args.run_dir)
    print(path.read_text(), end="")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="ccnrtrl", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment from a config file or preset")
    r.add_argument("config", help="config path or preset name (see configs/)")
    r.add_argument("overrides", nargs="*", help="key=value overrides")
    r.add_argument("--out", help="output directory (default output_dir/name)")
    r.add_argument("--workers", type=int)
    r.set_defaults(fn=_cmd_run)

    v = sub.add_parser("verify-gradients", help="compare forward-mode gradients with oracles")
    v.add_argument("--topology", default="all",
                   choices=["all", "columnar", "ccn", "constructive", "tbptt"])
    v.add_argument("--instances", type=int, default=50)
    v.add_argument("--steps", type=int, default=200)
    v.add_argument("--fd-checks", type=int, default=5,
                   help="instances per topology also checked by finite differences")
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(fn=_cmd_verify)

    d = sub.add_parser("dump-env", help="write a trace-patterning stream file")
    d.add_argument("output")
    d.add_argument("--steps", type=int, default=100_000)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--no-noise", action="store_true")
    d.set_defaults(fn=_cmd_dump_env)

    i = sub.add_parser("inspect-stream", help="print a stream file's header and a preview")
    i.add_argument("path")
    i.add_argument("--head", type=int, default=5)
    i.add_argument("--scan", type=int, default=1_000_000)
    i.set_defaults(fn=_cmd_inspect)

    b = sub.add_parser("estimate-budget", help="per-step operation estimates")
    b.add_argument("--m", type=int, default=12)
    b.add_argument("--budget", type=int, default=4000)
    b.add_argument("--tolerance", type=float, default=0.1)
    b.add_argument("--measure", action="store_true", help="also run the instrumented counter")
    b.add_argument("--steps", type=int, default=400)
    b.set_defaults(fn=_cmd_budget)

    s = sub.add_parser("summarize", help="rebuild summary.csv of a run directory")
    s.add_argument("run_dir")
    s.set_defaults(fn=_cmd_summarize)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
