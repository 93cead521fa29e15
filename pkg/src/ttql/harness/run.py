"""Experiment execution: source training (cached), target training, outputs."""

from __future__ import annotations

import dataclasses
import logging
import os
import shutil
import tempfile
from pathlib import Path
from typing import Optional

import numpy as np

from ..deepq import RunLog, train_source_task, train_target_task
from ..envs.nav import NavEnv
from ..net import DenseNetwork, load_network, network_from_bytes, network_to_bytes
from ..util import create_once
from .charts import emit_charts
from .config import ExperimentConfig, dumps_config
from .logs import CONFIG_TOML, EPISODES_CSV, TICKS_CSV, episodes_csv, ticks_csv

log = logging.getLogger(__name__)

SOURCE_NET = "source.ttqlnet"
SOURCE_STREAM = 1


def derive_seed(seed: int, stream: int) -> int:
    """Independent 63-bit seed for a named sub-run of ``seed``."""
    return int(np.random.SeedSequence([seed, stream]).generate_state(1, np.uint64)[0] >> np.uint64(1))


def run_id(cfg: ExperimentConfig, source: bool = False) -> str:
    role = "source" if source else cfg.regime
    return f"{cfg.experiment_name}-{role}-seed{cfg.seed}"


def _snapshot(cfg: ExperimentConfig, rid: str) -> dict:
    snap = dataclasses.asdict(cfg)
    snap["hidden_sizes"] = list(cfg.hidden_sizes)
    snap["run_id"] = rid
    return snap


def _train_source(cfg: ExperimentConfig):
    env = NavEnv(cfg.source_world())
    net, rlog = train_source_task(env, cfg.deep_config(source=True), derive_seed(cfg.seed, SOURCE_STREAM))
    rlog.config_snapshot = _snapshot(cfg, run_id(cfg, source=True))
    return net, rlog


def source_cache_path(cfg: ExperimentConfig, cache_dir) -> Path:
    stem = Path(cfg.source_map).stem
    return Path(cache_dir) / f"{stem}-seed{cfg.seed}-{cfg.source_key()}.ttqlnet"


def cached_source(cfg: ExperimentConfig, cache_dir=None) -> DenseNetwork:
    """Source network for ``cfg``, trained once per (map, seed, config hash).

    Concurrent callers may both train; the first finished file wins and every
    caller returns the stored copy, so all runs share identical parameters.
    """
    if cache_dir is None:
        return _train_source(cfg)[0]
    path = source_cache_path(cfg, cache_dir)
    if path.is_file():
        log.info("using cached source network %s", path)
        return load_network(path)
    net, _ = _train_source(cfg)
    if create_once(path, network_to_bytes(net)):
        log.info("cached source network at %s", path)
    return network_from_bytes(path.read_bytes())


class _Staging:
    """Write outputs into a sibling temp dir; publish on success, discard on failure."""

    def __init__(self, out_dir):
        self.out = Path(out_dir)

    def __enter__(self) -> Path:
        self.out.parent.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=f".{self.out.name}.partial-", dir=self.out.parent))
        return self.tmp

    def __exit__(self, exc_type, exc, tb):
        try:
            if exc_type is None:
                created = not self.out.exists()
                self.out.mkdir(exist_ok=True)
                moved = []
                try:
                    for f in sorted(self.tmp.iterdir()):
                        os.replace(f, self.out / f.name)
                        moved.append(self.out / f.name)
                except BaseException:
                    for f in moved:
                        f.unlink(missing_ok=True)
                    if created:
                        shutil.rmtree(self.out, ignore_errors=True)
                    raise
        finally:
            shutil.rmtree(self.tmp, ignore_errors=True)
        return False


def write_run(rlog: RunLog, cfg: ExperimentConfig, out_dir, charts: bool = True) -> Path:
    rid = rlog.config_snapshot.get("run_id", run_id(cfg))
    with _Staging(out_dir) as tmp:
        (tmp / EPISODES_CSV).write_text(episodes_csv(rlog, rid))
        (tmp / TICKS_CSV).write_text(ticks_csv(rlog))
        (tmp / CONFIG_TOML).write_text(dumps_config(cfg))
        if charts:
            emit_charts(tmp, tmp / "chart")
    return Path(out_dir)


def run_experiment(
    cfg: ExperimentConfig,
    out_dir=None,
    cache_dir=None,
    source: Optional[DenseNetwork] = None,
) -> RunLog:
    """Train the target task under ``cfg.regime`` and persist the logs.

    The source network is trained first unless ``source`` is given or the
    regime does not use one. With ``out_dir`` set, episodes.csv, ticks.csv,
    config.toml and the two charts land there; nothing is left behind if the
    run fails.
    """
    if cfg.regime != "no_transfer" and source is None:
        source = cached_source(cfg, cache_dir)
    if cfg.regime == "no_transfer":
        source = None
    env = NavEnv(cfg.target_world())
    _, rlog = train_target_task(
        env, cfg.deep_config(), cfg.seed, source_params=source, init_from_source=cfg.regime == "warm_start"
    )
    rlog.config_snapshot = _snapshot(cfg, run_id(cfg))
    if out_dir is not None:
        write_run(rlog, cfg, out_dir)
    return rlog


def train_source(cfg: ExperimentConfig, out_dir, cache_dir=None):
    """Train (or fetch) the source network and write it with its run logs."""
    net, rlog = _train_source(cfg)
    if cache_dir is not None:
        create_once(source_cache_path(cfg, cache_dir), network_to_bytes(net))
    with _Staging(out_dir) as tmp:
        (tmp / SOURCE_NET).write_bytes(network_to_bytes(net))
    write_run(rlog, cfg, out_dir)
    return net, rlog
