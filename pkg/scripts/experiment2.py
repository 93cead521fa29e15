"""Transfer instances over time on the pyramid -> complex pair.

Runs TTQL once per exploration strategy and seed, prints the transfer counts
per quarter of the training ticks and writes the transfer charts.

    python3 scripts/experiment2.py --out results/exp2 --seeds 0 1 2
"""

import argparse
import dataclasses
import logging
from pathlib import Path

import numpy as np

from ttql.harness import emit_charts, load_config, run_experiment
from ttql.harness.run import cached_source

EXPLORATIONS = ("eps-linear", "eps-exp", "boltzmann", "ucb")


def quarter_counts(log) -> list:
    flags = np.array([t["transfer_used"] for t in log.ticks])
    return [int(part.sum()) for part in np.array_split(flags, 4)]


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", default="experiment2", help="config file or bundled config name")
    p.add_argument("--out", default="results/exp2")
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.add_argument("--scale", type=float, help="override the config's scale")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    base = load_config(args.config)
    if args.scale is not None:
        base = dataclasses.replace(base, scale=args.scale)
    out = Path(args.out)
    print(f"{'exploration':<12} {'seed':>4}  transfers per quarter of ticks")
    for exploration in EXPLORATIONS:
        group = out / exploration
        for seed in args.seeds:
            cfg = dataclasses.replace(base, exploration=exploration, seed=seed, regime="ttql")
            source = cached_source(cfg, out / "source_cache")
            log = run_experiment(cfg, group / f"ttql-seed{seed}", source=source)
            print(f"{exploration:<12} {seed:>4}  {quarter_counts(log)}")
        emit_charts(group, group / "chart")


if __name__ == "__main__":
    main()
