"""Command line entry point: ``run``, ``gen-trace`` and ``verify``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .experiment import (EXIT_BOUND_FAILED, EXIT_INFEASIBLE, EXIT_OK, ExperimentConfig, emit_outputs,
                         run_experiment, verify)
from .network import NetworkConfig, default_network
from .scenarios import gen_piecewise_fixed, gen_poisson_regimes, save_trace

log = logging.getLogger("ewreserve")


def _seeds(text: str) -> tuple[int, ...]:
    try:
        if ".." in text:
            lo, hi = text.split("..")
            return tuple(range(int(lo), int(hi) + 1))
        return tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None


def _levels(text: str):
    return [[int(x) for x in regime.split(",")] for regime in text.split(";")]


def load_experiment(path) -> ExperimentConfig:
    """An experiment file, or a bare network file run with default experiment settings."""
    path = Path(path)
    raw = json.loads(path.read_text())
    if "capacities" in raw:
        return ExperimentConfig(network=NetworkConfig.from_dict(raw))
    return ExperimentConfig.from_dict(raw, base=path.parent)


def cmd_run(args) -> int:
    cfg = load_experiment(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if args.seeds:
        overrides["seeds"] = args.seeds
    if args.algo:
        overrides["algo"] = args.algo
    if args.horizon:
        overrides["horizon"] = args.horizon
    if args.scenario:
        overrides["scenario"] = {"generator": args.scenario}
    if overrides:
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), **overrides})
    results = run_experiment(cfg, workers=args.workers)
    code = EXIT_OK
    for res in results:
        run_dir = emit_outputs(res, args.out)
        for row in res.summary:
            print(f"seed={res.seed} algo={row['algo']} R_T={row['final_regret']:.4f} "
                  f"R_T/T={row['final_avg_regret']:.5f} avg_penalty={row['avg_expected_digamma']:.5f} "
                  f"-> {run_dir}")
        if res.constraint_failed:
            code = EXIT_BOUND_FAILED
        elif res.infeasible and code == EXIT_OK:
            code = EXIT_INFEASIBLE
    return code


def cmd_gen_trace(args) -> int:
    config = NetworkConfig.load(args.network) if args.network else default_network()
    if args.scenario == "fixed":
        kw = {}
        if args.levels:
            kw["levels_per_regime"] = _levels(args.levels)
        if args.change_points:
            kw["change_points"] = [int(x) for x in args.change_points.split(",")]
        trace = gen_piecewise_fixed(config, horizon=args.horizon, **kw)
    else:
        trace = gen_poisson_regimes(config, args.seed, horizon=args.horizon, region_mean=args.region_mean,
                                    clip=args.clip, boundary=args.boundary)
    save_trace(trace, args.out)
    print(f"wrote {trace.horizon} slots to {args.out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    code, reports = verify(args.run, min_seeds=args.min_seeds)
    for r in reports:
        status = "ok" if not r.problems and not r.constraint_failures else "FAIL"
        flags = []
        if r.regret_violations:
            flags.append("regret above bound (flagged)")
        if r.constraint_failures:
            flags.append("penalty average above bound")
        if r.infeasible:
            flags.append("infeasible hindsight benchmark")
        print(f"{r.run_dir}: {status}" + (f" [{'; '.join(flags)}]" if flags else ""))
        for p in r.problems:
            print(f"  - {p}")
    return code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ewreserve", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run seeded experiments and write CSV/SVG outputs")
    r.add_argument("--config", help="experiment or network JSON file (default: built-in instance)")
    r.add_argument("--seeds", type=_seeds, help="comma list or lo..hi range")
    r.add_argument("--out", required=True)
    r.add_argument("--algo", choices=("ew", "rl", "both"))
    r.add_argument("--scenario", choices=("fixed", "poisson"))
    r.add_argument("--horizon", type=int)
    r.add_argument("--workers", type=int, help="parallel seeds (default: $EWRESERVE_WORKERS or 1)")
    r.set_defaults(func=cmd_run)

    g = sub.add_parser("gen-trace", help="generate a request trace CSV")
    g.add_argument("--scenario", choices=("fixed", "poisson"), required=True)
    g.add_argument("--network", help="network JSON file (default: built-in instance)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--horizon", type=int, default=5000)
    g.add_argument("--levels", help="fixed scenario levels, e.g. '3,5,2;6,2,4;4,4,4'")
    g.add_argument("--change-points", help="fixed scenario change points, e.g. '500,1000'")
    g.add_argument("--region-mean", type=float, default=250.0)
    g.add_argument("--clip", type=int, default=10)
    g.add_argument("--boundary", choices=("geometric", "exponential"), default="geometric")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_trace)

    v = sub.add_parser("verify", help="recompute a run directory and certify the bounds")
    v.add_argument("--run", required=True)
    v.add_argument("--min-seeds", type=int, default=100,
                   help="seeds needed before regret-bound violations fail the check")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
