"""Static SVG charts: reward per episode and transfer counts over time.

Output is byte-stable: the SVG id salt is fixed, the date stamp is dropped,
text stays as text and path simplification is off so every episode keeps its
own vertex.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from .logs import find_runs, read_run, run_id_of

REWARD_SUFFIX = "_reward.svg"
TRANSFER_SUFFIX = "_transfers.svg"
WINDOW_COUNT = 40

_RC = {
    "svg.hashsalt": "ttql-charts",
    "svg.fonttype": "none",
    "path.simplify": False,
}


def episode_ends(log) -> tuple:
    """``(iteration at which each episode ended, its cumulative reward)``."""
    x = np.array([e.start_iteration + e.step_count for e in log.episodes], dtype=float)
    y = np.array([e.cumulative_reward for e in log.episodes], dtype=float)
    return x, y


def transfer_windows(log, window: int, budget: int) -> tuple:
    """Transfer counts per ``window`` iterations over ``[0, budget)``; x is the window start."""
    n = max(1, -(-budget // window))
    counts = np.zeros(n)
    for t in log.ticks:
        if t["transfer_used"]:
            counts[min(t["iteration"] // window, n - 1)] += 1
    return np.arange(n) * float(window), counts


def _window_of(logs, budget: int) -> int:
    w = int(logs[0].config_snapshot.get("chart_window", 0) or 0)
    return w if w > 0 else max(1, budget // WINDOW_COUNT)


def chart_paths(out_prefix) -> tuple:
    p = str(out_prefix)
    if p.endswith(".svg"):
        p = p[:-4]
    return Path(p + REWARD_SUFFIX), Path(p + TRANSFER_SUFFIX)


def _save(fig: Figure, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})


def emit_charts(log_dir, out_prefix) -> tuple:
    """Draw both charts for every run found in ``log_dir``.

    Returns the paths written: ``<prefix>_reward.svg`` (one polyline per run,
    one vertex per episode) and ``<prefix>_transfers.svg``.
    """
    dirs = find_runs(log_dir)
    if not dirs:
        raise FileNotFoundError(f"no run logs found under {log_dir}")
    logs = [read_run(d) for d in dirs]
    budget = max(lg.total_iterations for lg in logs)
    window = _window_of(logs, budget)
    reward_path, transfer_path = chart_paths(out_prefix)

    with matplotlib.rc_context(_RC):
        fig = Figure(figsize=(7, 4))
        ax = fig.add_subplot()
        for lg in logs:
            x, y = episode_ends(lg)
            ax.plot(x, y, marker=".", markersize=3, linewidth=1, label=run_id_of(lg), gid=f"reward-{run_id_of(lg)}")
        ax.set_xlabel("iteration at which the episode ended")
        ax.set_ylabel("cumulative reward of the episode")
        ax.set_title("Reward accumulated per episode")
        ax.legend(fontsize="small", title="x = episode end iteration", title_fontsize="small")
        fig.tight_layout()
        _save(fig, reward_path)

        fig = Figure(figsize=(7, 4))
        ax = fig.add_subplot()
        for lg in logs:
            x, c = transfer_windows(lg, window, budget)
            ax.plot(x, c, linewidth=1, label=run_id_of(lg), gid=f"transfers-{run_id_of(lg)}")
        ax.set_xlabel(f"iteration (window start, width {window})")
        ax.set_ylabel("transfer instances per window")
        ax.set_title("Transfer instances over time")
        ax.legend(fontsize="small")
        fig.tight_layout()
        _save(fig, transfer_path)
    return reward_path, transfer_path
