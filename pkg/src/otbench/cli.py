"""Command line entry point.

Subcommands: ground-truth, run, summarize, list.  Exit codes: 0 success,
1 training failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

from . import evaluation, experiment_runner


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="otbench",
        description="Train and evaluate 2D transport maps with small networks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ground-truth",
                       help="build and persist the evaluation reference")
    p.add_argument("--out", default=".", help="directory for the reference file")
    p.add_argument("--size", type=int, default=evaluation.GT_DEFAULT_B,
                   help="number of reference pairs")
    p.add_argument("--epsilon", type=float,
                   default=evaluation.GT_DEFAULT_EPSILON)
    p.add_argument("--seed", type=int, default=evaluation.GT_DEFAULT_SEED)

    p = sub.add_parser("run", help="run a named experiment")
    p.add_argument("name", nargs="?", default=None,
                   help="registry name (see the list subcommand)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--iters", type=int, default=None,
                   help="override total training steps")
    p.add_argument("--out", default=None, help="run directory")
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--gt", default=None,
                   help="path to a shared ground-truth file")
    p.add_argument("--override", action="append", default=[],
                   metavar="KEY=VALUE",
                   help="set any config field or strategy parameter")

    p = sub.add_parser("summarize", help="tabulate completed runs")
    p.add_argument("run_dirs", nargs="+")
    p.add_argument("--out", default="summary",
                   help="output path prefix for the tables")

    sub.add_parser("list", help="print the experiment registry")
    return parser


def _cmd_ground_truth(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, evaluation.GROUND_TRUTH_FILENAME)
    t0 = time.perf_counter()
    gt = evaluation.build_ground_truth(B=args.size, epsilon=args.epsilon,
                                       seed=args.seed)
    evaluation.save_ground_truth(gt, path)
    secs = time.perf_counter() - t0
    print(f"wrote {path} (B={gt.B}, epsilon={gt.epsilon_used}, {secs:.1f}s)")
    return 0


def _cmd_run(args) -> int:
    overrides = {}
    for item in args.override:
        if "=" not in item:
            print(f"bad --override {item!r}: expected KEY=VALUE",
                  file=sys.stderr)
            return 2
        key, _, value = item.partition("=")
        overrides[key] = value
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.iters is not None:
        overrides["iterations"] = args.iters
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.gt is not None:
        overrides["ground_truth_path"] = args.gt
    if args.name is None and args.config is None:
        print("run needs a registry name or --config", file=sys.stderr)
        return 2
    try:
        train_run = experiment_runner.resolve_config(
            name=args.name, config_file=args.config, overrides=overrides)
    except experiment_runner.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        report = experiment_runner.run(train_run)
    except (FloatingPointError, RuntimeError) as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return 1
    print(f"{train_run.experiment_name}: min_eps2={report.min_eps2:.4f} "
          f"t_min={report.t_min} sigma={report.sigma_eps2_after_min:.4f} "
          f"({train_run.out_dir})")
    return 0


def _cmd_summarize(args) -> int:
    try:
        rows = experiment_runner.summarize(args.run_dirs, out_prefix=args.out)
    except ValueError as exc:
        print(f"summarize failed: {exc}", file=sys.stderr)
        return 2
    print(f"summarized {len(rows)} runs -> {args.out}.csv, "
          f"{args.out}_timings.csv, {args.out}.txt")
    return 0


def _cmd_list() -> int:
    for name in sorted(experiment_runner.REGISTRY):
        preset = experiment_runner.REGISTRY[name]
        print(f"{name:32s} {preset['strategy']:12s} "
              f"T={preset['iterations']}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "ground-truth":
        return _cmd_ground_truth(args)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "summarize":
        return _cmd_summarize(args)
    return _cmd_list()


if __name__ == "__main__":
    sys.exit(main())
