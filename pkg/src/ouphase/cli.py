"""Batch command-line front-end.

    ouphase run <preset|custom> [--set key=value ...] [--config FILE]
                [--out DIR] [--seed N] [--replicas N] [--format csv,json]
                [--fidelity linearized|exact] [--workers N] [--timestamps]

Exit codes: 0 success, 1 validation error, 2 runtime or numerical failure.
"""

from __future__ import annotations

import argparse
import sys

from .presets import PRESETS, ConfigError, parse_config_file, validate_config
from .sweeps import run_experiment


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ouphase", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a preset or custom sweep")
    run.add_argument("preset", help=f"one of: {', '.join(PRESETS)}")
    run.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a preset parameter (repeatable)",
    )
    run.add_argument("--config", help="key-value config file; flags override file values")
    run.add_argument("--out", default="results", help="output directory (default: results)")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--replicas", type=int, default=0, help="Monte Carlo replicas (0 = analytic only)")
    run.add_argument("--format", default="csv", help="comma-separated subset of csv,json")
    run.add_argument("--fidelity", default="linearized", help="linearized or exact (homodyne)")
    run.add_argument("--workers", type=int, default=1, help="worker processes for replica runs")
    run.add_argument(
        "--timestamps",
        action="store_true",
        help="include a generation timestamp in metadata (off by default for reproducibility)",
    )
    return parser


def _collect_raw(args) -> dict:
    raw = {}
    if args.config:
        with open(args.config) as fh:
            raw.update(parse_config_file(fh.read()))
    for item in args.overrides:
        if "=" not in item:
            raise ConfigError([f"--set: expected KEY=VALUE, got {item!r}"])
        key, value = item.split("=", 1)
        raw[key.strip()] = value.strip()
    raw["preset"] = args.preset
    raw["output_dir"] = args.out
    raw["seed"] = args.seed
    raw["replicas"] = args.replicas
    raw["formats"] = args.format
    raw["fidelity"] = args.fidelity
    raw["workers"] = args.workers
    raw["timestamps"] = args.timestamps
    return raw


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        spec = validate_config(_collect_raw(args))
    except (ConfigError, OSError) as exc:
        for line in getattr(exc, "errors", [str(exc)]):
            print(f"error: {line}", file=sys.stderr)
        return 1
    try:
        written = run_experiment(spec)
    except ConfigError as exc:
        for line in exc.errors:
            print(f"error: {line}", file=sys.stderr)
        return 1
    except Exception as exc:  # numerical / runtime failure
        print(f"failure: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
