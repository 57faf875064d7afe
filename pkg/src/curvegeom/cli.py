"""Command line: ``curvegeom run CONFIG`` and ``curvegeom validate CONFIG``.

Exit codes: 0 success, 1 runtime or numeric failure, 2 usage or validation.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .experiments import ConfigError, ExperimentConfig, run, validate, write_report

log = logging.getLogger("curvegeom")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="curvegeom", description="Run Brownian-curve experiments from JSON configs.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, text in (("run", "run an experiment and write <prefix>.csv and <prefix>.meta.json"),
                       ("validate", "list problems with a config without running it")):
        p = sub.add_parser(name, help=text)
        p.add_argument("config", help="path to the JSON config")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="override the output prefix")
    return ap


def _load(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.output = args.out
    return cfg


def main(argv=None) -> int:
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _load(args)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        for issue in exc.issues:
            print(f"invalid config: {issue}", file=sys.stderr)
        return 2
    issues = validate(cfg)
    if args.command == "validate":
        for issue in issues:
            print(issue)
        return 2 if issues else 0
    if issues:
        for issue in issues:
            print(f"invalid config: {issue}", file=sys.stderr)
        return 2
    try:
        report = run(cfg)
    except (ArithmeticError, ValueError, RuntimeError) as exc:
        print(f"numeric failure in '{cfg.experiment}': {exc}", file=sys.stderr)
        return 1
    csv_path, meta_path = write_report(report)
    log.info("wrote %s and %s (%.2fs)", csv_path, meta_path, report.wall_time)
    print(csv_path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
