"""CSV persistence for run logs.

Floats are written with ``repr`` so a log read back from disk is bitwise the
one that was written.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

from ..deepq import TICK_FIELDS, RunLog
from ..mdp import EndReason, EpisodeLog
from ..util import load_toml

EPISODE_FIELDS = ("run_id", "episode_index", "start_iteration", "step_count", "cumulative_reward", "ended_by")
EPISODES_CSV = "episodes.csv"
TICKS_CSV = "ticks.csv"
CONFIG_TOML = "config.toml"


class LogFormatError(ValueError):
    pass


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows([_cell(v) for v in row] for row in rows)
    return buf.getvalue()


def episodes_csv(log: RunLog, run_id: str) -> str:
    rows = [
        (run_id, e.episode_index, e.start_iteration, e.step_count, float(e.cumulative_reward), e.ended_by.value)
        for e in log.episodes
    ]
    return _csv_text(EPISODE_FIELDS, rows)


def ticks_csv(log: RunLog) -> str:
    rows = []
    for t in log.ticks:
        row = [t[k] for k in TICK_FIELDS]
        row = [float(v) if k in ("loss", "mnbe_main", "exploration_param") else v for k, v in zip(TICK_FIELDS, row)]
        if row[3] is not None:
            row[3] = float(row[3])
        rows.append(row)
    return _csv_text(TICK_FIELDS, rows)


def _read_rows(path: Path, header) -> list:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        got = next(reader, None)
        if tuple(got or ()) != tuple(header):
            raise LogFormatError(f"{path}: expected columns {list(header)}, found {got}")
        return list(reader)


def read_run(run_dir) -> RunLog:
    """Load a run directory written by :func:`ttql.harness.run_experiment`."""
    run_dir = Path(run_dir)
    ep_path = run_dir / EPISODES_CSV
    if not ep_path.is_file():
        raise FileNotFoundError(f"no {EPISODES_CSV} in {run_dir}")
    episodes, run_ids = [], set()
    for rid, idx, start, steps, reward, ended in _read_rows(ep_path, EPISODE_FIELDS):
        run_ids.add(rid)
        episodes.append(EpisodeLog(int(idx), int(start), int(steps), float(reward), EndReason(ended)))
    ticks = []
    tick_path = run_dir / TICKS_CSV
    if tick_path.is_file():
        for it, loss, m_main, m_src, used, param in _read_rows(tick_path, TICK_FIELDS):
            ticks.append({
                "iteration": int(it),
                "loss": float(loss),
                "mnbe_main": float(m_main),
                "mnbe_source": float(m_src) if m_src else None,
                "transfer_used": int(used),
                "exploration_param": float(param),
            })
    snapshot = load_toml(run_dir / CONFIG_TOML) if (run_dir / CONFIG_TOML).is_file() else {}
    if len(run_ids) > 1:
        raise LogFormatError(f"{ep_path}: mixes run ids {sorted(run_ids)}")
    snapshot["run_id"] = run_ids.pop() if run_ids else run_dir.name
    return RunLog(episodes=episodes, ticks=ticks, config_snapshot=snapshot, seed=int(snapshot.get("seed", 0)))


def find_runs(root) -> list:
    """Run directories at ``root`` or directly below it, sorted by path."""
    root = Path(root)
    if (root / EPISODES_CSV).is_file():
        return [root]
    if not root.is_dir():
        return []
    return sorted(p.parent for p in root.glob(f"*/{EPISODES_CSV}"))


def run_id_of(log: RunLog) -> str:
    return str(log.config_snapshot.get("run_id", f"run-{log.seed}"))
