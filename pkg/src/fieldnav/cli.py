"""Command-line entry point: ``fieldnav train|matrix|eval|report|plot``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import harness, metrics


def _add_common(p, need_algo=False):
    p.add_argument("--config", type=Path, help="YAML experiment config")
    p.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    p.add_argument("--seed", type=int, action="append", help="seed (repeatable)")
    p.add_argument("--algo", action="append", required=need_algo,
                   help="dqn, double, dueling, ddpg or td3 (repeatable)")
    p.add_argument("--env", action="append",
                   help="8x8, 10x10, scenario1..3 or a map/scenario file (repeatable)")
    p.add_argument("--episodes", type=int, help="override the episode budget")
    p.add_argument("--slippery", action="store_true", default=None, help="slippery grid")
    p.add_argument("--workers", type=int, help="parallel processes")
    p.add_argument("--stop-at-convergence", action="store_true", default=None,
                   help="end a run once it meets the convergence rule")


def _config_from_args(args):
    overrides = dict(algos=args.algo, envs=args.env, seeds=args.seed, episodes=args.episodes,
                     slippery=args.slippery, workers=args.workers,
                     stop_at_convergence=args.stop_at_convergence)
    if args.config is not None:
        return harness.load_config(args.config, **overrides)
    overrides = {k: v for k, v in overrides.items() if v is not None}
    overrides.setdefault("envs", ["8x8"] if harness.algo_kind(args.algo[0]) == "discrete"
                         else ["scenario1"])
    return harness.ExperimentConfig(**overrides)


def cmd_train(args):
    cfg = _config_from_args(args)
    specs = cfg.runs()
    if len(specs) != 1:
        raise SystemExit(f"train runs exactly one combination, config gives {len(specs)}; "
                         "use 'matrix'")
    result = harness._execute_safely(specs[0], args.out)
    harness.write_report(args.out)
    if result.status != "ok":
        print(result.error, file=sys.stderr)
        return 1
    print(f"{result.run_id}: {result.summary}")
    return 0


def cmd_matrix(args):
    results = harness.run_experiment(_config_from_args(args), args.out)
    print(harness.format_report(harness.collect(args.out)))
    return 0 if all(r.status == "ok" for r in results) else 1


def cmd_eval(args):
    path, outcome = harness.evaluate(args.out, args.run_id)
    print(f"outcome={outcome} steps={len(path) - 1}")
    for p in path:
        print(" ".join(f"{v:.4f}" for v in p) if hasattr(p, "__len__") else p)
    return 0 if outcome == "goal" else 1


def cmd_report(args):
    harness.write_report(args.out)
    print(harness.format_report(harness.collect(args.out)))
    return 0


def cmd_plot(args):
    for csv_path in args.csv:
        run_log = metrics.RunLog.load(csv_path)
        kind = run_log.metadata.get("kind") or args.kind
        harness.write_curve_plots(run_log, csv_path.with_suffix(""), kind, args.window)
        print(f"wrote plots for {csv_path}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="fieldnav", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a single run")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("matrix", help="run the algorithm x env x seed matrix")
    _add_common(p)
    p.set_defaults(func=cmd_matrix)

    p = sub.add_parser("eval", help="greedy rollout of a saved run")
    p.add_argument("run_id")
    p.add_argument("--out", type=Path, default=Path("results"))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="print the comparison table for a results directory")
    p.add_argument("--out", type=Path, default=Path("results"))
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("plot", help="redraw learning-curve SVGs from run CSVs")
    p.add_argument("csv", nargs="+", type=Path)
    p.add_argument("--kind", choices=("discrete", "continuous"), default="discrete")
    p.add_argument("--window", type=int, default=100)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command in ("train", "matrix") and args.config is None and not args.algo:
        raise SystemExit("give --algo or --config")
    try:
        return args.func(args)
    except (harness.ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
