"""Side-by-side summary of runs on the same target map and budget.

Every metric is computed from the episode records alone, so the table can be
rebuilt from episodes.csv files.
"""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path

from ..deepq import RunLog
from .logs import run_id_of

METRICS = ("total_reward", "episode_count", "final20_mean_length", "reward_auc")
FINAL_EPISODES = 20


class BudgetMismatch(ValueError):
    pass


def reward_auc(log: RunLog) -> float:
    """Area under the running reward total vs iteration.

    The running total is known at each episode end; between ends it is
    interpolated linearly from ``(0, 0)``.
    """
    area, t_prev, total_prev = 0.0, 0, 0.0
    for e in log.episodes:
        t = e.start_iteration + e.step_count
        total = total_prev + e.cumulative_reward
        area += (total_prev + total) / 2 * (t - t_prev)
        t_prev, total_prev = t, total
    return area


def summarize(log: RunLog) -> dict:
    tail = log.episodes[-FINAL_EPISODES:]
    return {
        "run_id": run_id_of(log),
        "total_reward": float(sum(e.cumulative_reward for e in log.episodes)),
        "episode_count": len(log.episodes),
        "final20_mean_length": sum(e.step_count for e in tail) / len(tail) if tail else math.nan,
        "reward_auc": reward_auc(log),
    }


def compare_runs(logs: list) -> list:
    """One row per run plus ``delta_<metric>`` against the first run."""
    if len(logs) < 2:
        raise ValueError("compare_runs needs at least two runs")
    budgets = {lg.total_iterations for lg in logs}
    if len(budgets) > 1:
        raise BudgetMismatch(f"runs have different iteration budgets: {sorted(budgets)}")
    maps = {str(lg.config_snapshot.get("target_map", "")) for lg in logs}
    if len(maps) > 1:
        raise BudgetMismatch(f"runs use different target maps: {sorted(maps)}")
    rows = [summarize(lg) for lg in logs]
    base = rows[0]
    for row in rows:
        for m in METRICS:
            row[f"delta_{m}"] = row[m] - base[m]
    return rows


def columns() -> list:
    return ["run_id", *METRICS, *(f"delta_{m}" for m in METRICS)]


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def summary_csv(rows: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns())
    for row in rows:
        w.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in columns()])
    return buf.getvalue()


def summary_table(rows: list) -> str:
    """Aligned plain-text table; text left-aligned, numbers right-aligned."""
    cols = columns()
    cells = [cols] + [[_fmt(row[c]) for c in cols] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(cols))]
    lines = []
    for r in cells:
        parts = [r[0].ljust(widths[0])] + [v.rjust(w) for v, w in zip(r[1:], widths[1:])]
        lines.append("  ".join(parts).rstrip())
    return "\n".join(lines) + "\n"


def write_summary(rows: list, out_path) -> tuple:
    """Write ``<out>.csv`` and ``<out>.txt``; returns both paths."""
    out = Path(out_path)
    stem = out.with_suffix("") if out.suffix in (".csv", ".txt") else out
    csv_path, txt_path = Path(f"{stem}.csv"), Path(f"{stem}.txt")
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    csv_path.write_text(summary_csv(rows))
    txt_path.write_text(summary_table(rows))
    return csv_path, txt_path
