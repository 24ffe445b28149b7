"""Command-line entry point: ``collabqoe run <config.ini> [flags]``."""
from __future__ import annotations

import argparse
import logging
import sys

from .errors import CollabQoEError
from .runner import load_manifest, run_manifest

log = logging.getLogger("collabqoe")

EXIT_CONFIG = 2
EXIT_IO = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="collabqoe", description="Collaborative QoE model training experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the experiments described by a config file")
    run.add_argument("config", help="INI experiment config")
    src = run.add_mutually_exclusive_group()
    src.add_argument("--data", help="web-QoE CSV dataset (overrides [data] source)")
    src.add_argument("--synthetic", action="store_true", default=None, help="use synthetic groups matched to the reference group statistics")
    run.add_argument("--out", help="output directory")
    run.add_argument("--seed", type=int, help="base seed; repeats use seed .. seed+repeats-1")
    run.add_argument("--repeats", type=int, help="independent runs per scenario and model")
    run.add_argument("--transport", choices=("inproc", "tcp"))
    run.add_argument(
        "--scenario",
        action="append",
        choices=("il", "cl", "rrl", "fl"),
        help="scenario to run; repeat the flag for several (default: from config)",
    )
    run.add_argument("--clock", choices=("cpu", "wall", "steps"), help="how training time is measured")
    run.add_argument("--jobs", type=int, help="repeats to run in parallel processes")
    run.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    overrides = {
        "data": args.data,
        "synthetic": args.synthetic,
        "out": args.out,
        "seed": args.seed,
        "repeats": args.repeats,
        "transport": args.transport,
        "scenarios": args.scenario,
        "clock": args.clock,
        "jobs": args.jobs,
    }
    try:
        manifest = load_manifest(args.config, overrides)
        outcome = run_manifest(manifest)
    except CollabQoEError as exc:
        print(f"collabqoe: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"collabqoe: {exc}", file=sys.stderr)
        return EXIT_IO
    for table in outcome.tables.values():
        print(table.to_markdown())
    print(f"wrote {len(outcome.files)} files to {manifest.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
