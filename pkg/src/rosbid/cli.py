"""Command-line entry point: run, sweep, and check subcommands.

Exit codes: 0 success, 1 configuration error, 2 runtime error, 3 failed
self-check suite.  Error messages go to standard error; result files are
written by a single process after all trials finish.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path
from typing import Optional

from . import __version__
from .checks import SUITES, run_checks
from .config import ConfigError, load_config
from .report import write_all
from .simulate import run_experiment


def _add_experiment_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="TOML experiment file")
    parser.add_argument("--out", default=None,
                        help="output directory (overrides output_dir from the config)")
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker processes for trials (default: all cores)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rosbid",
        description="Simulate online bidding policies under RoS and budget constraints.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run all trials for one config")
    _add_experiment_args(run_p)

    sweep_p = sub.add_parser("sweep", help="run the horizon sweep and fit the regret slope")
    _add_experiment_args(sweep_p)

    check_p = sub.add_parser("check", help="run the built-in property suites")
    check_p.add_argument("--suite", choices=sorted(SUITES), default=None,
                         help="run a single suite instead of all of them")
    return parser


def _cmd_experiment(args: argparse.Namespace, sweep: bool) -> int:
    config = load_config(args.config)
    if args.out is not None:
        config.output_dir = args.out
    if args.threads < 1:
        raise ConfigError(f"--threads must be at least 1, got {args.threads}")

    report = run_experiment(config, threads=args.threads)
    out_dir = Path(config.output_dir)
    paths = write_all(out_dir, config, report, __version__, sweep=sweep)

    print(f"policy {config.policy}, seed {config.seed}, "
          f"beta estimate {report.beta_estimate:.4f}")
    for hs in report.horizon_stats:
        regret = "n/a" if hs.mean_regret is None else f"{hs.mean_regret:.4g}"
        oracle = hs.oracle_method or "none"
        print(f"  T={hs.horizon}: mean reward {hs.mean_reward:.4g}, "
              f"mean regret {regret} ({oracle}), "
              f"RoS violations {hs.violation_count}/{hs.trials}")
    if sweep and report.regret_slope is not None:
        print(f"  fitted log-log regret slope: {report.regret_slope:.4f}")
    print(f"wrote {len(paths)} files to {out_dir}")
    return 0


def _cmd_check(args: argparse.Namespace) -> int:
    results = run_checks(args.suite)
    failed = False
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        print(f"{status} {res.name}: {res.detail}")
        if not res.passed:
            failed = True
    return 3 if failed else 0


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_experiment(args, sweep=False)
        if args.command == "sweep":
            return _cmd_experiment(args, sweep=True)
        return _cmd_check(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failures map to exit 2 by contract
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
