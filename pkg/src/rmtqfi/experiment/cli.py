"""Command line entry point: ``rmtqfi {run,sweep,validate,report}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import ConfigError, load_config
from .runner import WORKERS_ENV, report, run, sweep

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rmtqfi", description="QFI dynamics of random-matrix and spin-chain models")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (("run", "run one configuration"), ("sweep", "run a parameter sweep")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("config")
        s.add_argument("--dry-run", action="store_true", help="write the manifest only")
        s.add_argument("--workers", type=int, default=None, help=f"worker processes (default ${WORKERS_ENV} or 1)")
        s.add_argument("--output-dir", default=None)
    v = sub.add_parser("validate", help="check a configuration and print it resolved")
    v.add_argument("config")
    r = sub.add_parser("report", help="summarize a run directory")
    r.add_argument("run_dir")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "report":
        try:
            print(report(args.run_dir))
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            print(f"cannot read run directory: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        return EXIT_OK
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        print(f"ok: scenario {cfg.scenario}, model {cfg.model}")
        return EXIT_OK
    if args.workers is not None and args.workers < 1:
        print("config error: --workers must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "sweep" or cfg.scenario == "coupling-sweep":
        if cfg.sweep is None:
            print("config error: sweep: section required for the sweep command", file=sys.stderr)
            return EXIT_CONFIG
        return sweep(cfg, dry_run=args.dry_run, workers=args.workers, output_dir=args.output_dir)
    return run(cfg, dry_run=args.dry_run, workers=args.workers, output_dir=args.output_dir)


if __name__ == "__main__":
    sys.exit(main())
