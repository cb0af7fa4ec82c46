"""Command-line entry point: ``abpmimo <experiment> [--config F] [--seed S] [--trials N] [--out CSV] [--json]``."""

import argparse
import json
import logging
import sys

from . import errors
from .experiments import KINDS, ExperimentConfig, load_config, run


def build_parser():
    p = argparse.ArgumentParser(prog="abpmimo", description="Auxiliary beam pair estimation experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="experiment", required=True)
    for kind in KINDS:
        s = sub.add_parser(kind)
        s.add_argument("--config", help="JSON or TOML experiment descriptor")
        s.add_argument("--seed", type=int)
        s.add_argument("--trials", type=int)
        s.add_argument("--out", help="CSV output path (default: stdout)")
        s.add_argument("--json", action="store_true", help="print the report as JSON")
    return p


def _error(kind, message, code):
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.config:
            cfg = load_config(args.config, args.experiment)
            if cfg.kind != args.experiment:
                raise errors.ConfigurationError(f"config is for {cfg.kind!r}, not {args.experiment!r}")
            overrides = {k: v for k, v in (("seed", args.seed), ("trials", args.trials), ("out", args.out)) if v is not None}
            if overrides:
                cfg = ExperimentConfig.from_mapping({**cfg.to_dict(), **overrides}, cfg.kind)
        else:
            cfg = ExperimentConfig.for_kind(args.experiment, seed=args.seed, trials=args.trials, out=args.out)
        report = run(cfg)
    except errors.AbpError as exc:
        return _error(type(exc).__name__, str(exc), 2)
    except (OSError, ValueError) as exc:
        return _error(type(exc).__name__, str(exc), 1)
    if args.json:
        print(report.to_json())
    elif not cfg.out:
        report.to_csv(sys.stdout)
    return 0


if __name__ == "__main__":
    sys.exit(main())
