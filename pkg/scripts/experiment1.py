"""Regime x exploration grid on the pyramid -> techno pair.

Runs the three regimes (no transfer, warm start, TTQL) under linear and
exponential epsilon-greedy and Boltzmann exploration, then writes a summary
table and the reward/transfer charts for each exploration strategy.

    python3 scripts/experiment1.py --out results/exp1 --seeds 0 1 2
"""

import argparse
import dataclasses
import logging
from pathlib import Path

from ttql.harness import compare_runs, emit_charts, load_config, read_run, run_experiment, summary_table, write_summary
from ttql.harness.run import cached_source

REGIMES = ("no_transfer", "warm_start", "ttql")
EXPLORATIONS = ("eps-linear", "eps-exp", "boltzmann")


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", default="experiment1", help="config file or bundled config name")
    p.add_argument("--out", default="results/exp1")
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.add_argument("--scale", type=float, help="override the config's scale")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    base = load_config(args.config)
    if args.scale is not None:
        base = dataclasses.replace(base, scale=args.scale)
    out = Path(args.out)
    for exploration in EXPLORATIONS:
        group = out / exploration
        for seed in args.seeds:
            cfg = dataclasses.replace(base, exploration=exploration, seed=seed)
            source = cached_source(cfg, out / "source_cache")
            for regime in REGIMES:
                run_dir = group / f"{regime}-seed{seed}"
                run_experiment(dataclasses.replace(cfg, regime=regime), run_dir, source=None if regime == "no_transfer" else source)
        rows = compare_runs([read_run(group / f"{r}-seed{s}") for s in args.seeds for r in REGIMES])
        write_summary(rows, group / "summary")
        emit_charts(group, group / "chart")
        print(f"\n== {exploration} ==")
        print(summary_table(rows), end="")


if __name__ == "__main__":
    main()
