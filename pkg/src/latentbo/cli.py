"""Command-line entry point: ``latentbo run|aggregate|plot|profile|train-vae``.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import harness

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _results_dir(path: str) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise harness.ConfigError(f"{p} is not a results directory")
    return p


def cmd_run(args):
    out = harness.run_experiment(args.config, workers=args.workers)
    print(out)


def cmd_aggregate(args):
    for run, agg in harness.aggregate_dir(_results_dir(args.dir)).items():
        print(f"{run}: final mean {agg.mean[-1]:.6g} +- {agg.std[-1]:.3g} over {agg.per_seed.shape[0]} seeds")
    harness.write_manifest(args.dir)


def cmd_plot(args):
    for path in harness.plot_dir(_results_dir(args.dir), log_y=args.log_y):
        print(path)


def cmd_profile(args):
    table = harness.profile_report(_results_dir(args.dir), args.tau, args.ng)
    for tau, solved in table.items():
        cells = ", ".join(f"{s} {100 * v:.0f}%" for s, v in solved.items())
        print(f"tau={tau:g}: {cells}")


def cmd_train_vae(args):
    cfg = harness.load_config(args.config)
    for path in harness.pretrain_all(cfg):
        print(path)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="latentbo", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run every (run, seed) in a config")
    p.add_argument("config")
    p.add_argument("--workers", type=int, default=None, help="override [experiment] workers")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("aggregate", help="write per-run mean/std incumbent curves")
    p.add_argument("dir")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("plot", help="render convergence SVGs per problem")
    p.add_argument("dir")
    p.add_argument("--log-y", action="store_true", default=None, help="plot the optimality gap on a log axis")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("profile", help="performance/data profiles and the solved table")
    p.add_argument("dir")
    p.add_argument("--tau", type=float, nargs="+", default=[1e-1, 1e-3])
    p.add_argument("--ng", type=int, default=20, help="largest data-profile budget in units of n_p + 1")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("train-vae", help="pre-train and cache every VAE a config needs")
    p.add_argument("config")
    p.set_defaults(func=cmd_train_vae)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except harness.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - report any failure as a runtime error
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
