"""Command line entry point (``ttql``).

Failures exit with status 1 (bad input) or 2 (usage) and print exactly one
JSON line to stderr, e.g. ``{"error": "ConfigError", "key": "gamma", "message": "..."}``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..envs.grid import grid_value_iteration, load_grid
from ..net import load_network
from ..tabular import format_qtable
from .charts import emit_charts
from .compare import compare_runs, summary_table, write_summary
from .config import ConfigError, load_config
from .logs import find_runs, read_run
from .run import run_experiment, train_source


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _fail("UsageError", message, code=2)


def _fail(kind: str, message: str, key=None, code: int = 1):
    payload = {"error": kind, "message": " ".join(str(message).split())}
    if key:
        payload["key"] = key
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    raise SystemExit(code)


def _default_cache(out: Path) -> Path:
    return out.resolve().parent / "source_cache"


def cmd_train_source(args) -> None:
    cfg = load_config(args.config, strict=args.strict)
    out = Path(args.out)
    train_source(cfg, out, args.cache or _default_cache(out))
    print(out)


def cmd_run(args) -> None:
    overrides = {} if args.seed is None else {"seed": args.seed}
    cfg = load_config(args.config, strict=args.strict, **overrides)
    out = Path(args.out)
    source = load_network(args.source) if args.source else None
    run_experiment(cfg, out, cache_dir=args.cache or _default_cache(out), source=source)
    print(out)


def cmd_compare(args) -> None:
    dirs = [d for root in args.runs for d in find_runs(root)]
    if not dirs:
        raise FileNotFoundError(f"no run logs found under {' '.join(args.runs)}")
    rows = compare_runs([read_run(d) for d in dirs])
    write_summary(rows, args.out)
    sys.stdout.write(summary_table(rows))


def cmd_chart(args) -> None:
    for path in emit_charts(args.runs, args.out):
        print(path)


def cmd_oracle(args) -> None:
    world = load_grid(args.grid)
    sys.stdout.write(format_qtable(grid_value_iteration(world, args.gamma)))


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ttql", description="Target transfer Q-learning experiments.")
    p.add_argument("--strict", action="store_true", help="reject unknown config keys")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("train-source", help="train and store the source network")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--cache", help="source cache directory (default: <out>/../source_cache)")
    s.set_defaults(func=cmd_train_source)

    s = sub.add_parser("run", help="run one experiment")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.add_argument("--cache", help="source cache directory (default: <out>/../source_cache)")
    s.add_argument("--source", help="use this stored source network instead of training one")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("compare", help="summary table over run directories")
    s.add_argument("--runs", nargs="+", required=True)
    s.add_argument("--out", required=True, help="output stem; writes .csv and .txt")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("chart", help="reward and transfer charts")
    s.add_argument("--runs", required=True)
    s.add_argument("--out", required=True, help="output prefix")
    s.set_defaults(func=cmd_chart)

    s = sub.add_parser("oracle", help="print the value-iteration Q-table of a grid world")
    s.add_argument("--grid", required=True)
    s.add_argument("--gamma", type=float, required=True)
    s.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        _fail("ConfigError", str(exc), key=exc.key)
    except (OSError, ValueError, RuntimeError) as exc:
        _fail(type(exc).__name__, str(exc))
    return 0


if __name__ == "__main__":
    sys.exit(main())
