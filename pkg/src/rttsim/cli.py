"""Command line entry point: ``rttsim run [config] [--table1] [--fig5] [--fig6]``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .campaign import run_scenario
from .config import PRESETS, ConfigError, load_config, preset


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rttsim",
                                     description="Simulated round-trip-time ranging campaigns.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one config and/or the paper presets")
    run.add_argument("config", nargs="?", help="campaign config (TOML)")
    run.add_argument("--seed", type=int, help="override the config seed")
    run.add_argument("--out", default="results", help="output directory (default: ./results)")
    run.add_argument("--full", action="store_true", help="paper-scale sample counts (10x desk)")
    for name in PRESETS:
        run.add_argument(f"--{name}", action="store_true", help=f"run the {name} preset")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    jobs = []
    if args.config:
        jobs.append((args.config, lambda: load_config(args.config)))
    for name in PRESETS:
        if getattr(args, name):
            jobs.append((f"--{name}", lambda name=name: preset(name)))
    if not jobs:
        print("rttsim run: give a config file or at least one preset flag", file=sys.stderr)
        return 2

    failed = 0
    out = Path(args.out)
    for label, load in jobs:
        try:
            config = load().with_overrides(seed=args.seed, full=args.full)
            for path in run_scenario(config, out):
                print(path)
        except ConfigError as exc:
            print(f"{label}: config error: {exc}", file=sys.stderr)
            failed += 1
        except Exception as exc:  # any scenario failure counts toward the exit status
            print(f"{label}: {type(exc).__name__}: {exc}", file=sys.stderr)
            failed += 1
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
