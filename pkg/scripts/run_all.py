"""Run every experiment with its default config and write one CSV per experiment.

    python3 scripts/run_all.py --out results/ [--trials 500] [--seed 0] [--only maee rician]
"""

import argparse
import logging
import time
from pathlib import Path

from abpmimo.experiments import KINDS, ExperimentConfig, run


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, help="override every experiment's trial count (quick look)")
    p.add_argument("--only", nargs="+", choices=KINDS, help="subset of experiments")
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for kind in args.only or KINDS:
        cfg = ExperimentConfig.for_kind(kind, seed=args.seed, trials=args.trials, out=str(out / f"{kind}.csv"))
        t0 = time.perf_counter()
        rep = run(cfg)
        print(f"{kind:16s} {len(rep.rows):5d} rows  {time.perf_counter() - t0:6.1f} s  -> {cfg.out}")


if __name__ == "__main__":
    main()
