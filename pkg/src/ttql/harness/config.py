"""Experiment configuration: flat TOML files with baseline defaults.

Every key is optional. Absent keys take the baseline values below; the
iteration counts are multiplied by ``scale`` when the run is built, so a
desk-scale run keeps the same schedule proportions.
"""

from __future__ import annotations

import dataclasses
import hashlib
import logging
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

from ..deepq import REGIMES, DeepTtqlConfig
from ..envs.nav import load_world, map_path
from ..explore import STRATEGIES
from ..util import dumps_toml, load_toml, loads_toml

log = logging.getLogger(__name__)

BUNDLED_CONFIGS = ("desk", "experiment1", "experiment2")
SCALED_KEYS = ("max_iterations", "warmup_steps", "target_update_period", "decay_horizon", "training_interval")


class ConfigError(ValueError):
    def __init__(self, key: Optional[str], message: str):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


@dataclass
class ExperimentConfig:
    experiment_name: str = "experiment"
    source_map: str = "pyramid"
    target_map: str = "techno"
    regime: str = "ttql"
    seed: int = 0
    scale: float = 1.0
    source_scale: float = 1.0  # extra multiplier on the source run's iteration counts
    # learning
    gamma: float = 0.99
    learning_rate: float = 2e-6
    training_interval: int = 16
    target_update_period: int = 15_000
    batch_size: int = 32
    warmup_steps: int = 5_000
    max_iterations: int = 150_000
    dropout_rate: float = 0.1
    loss: str = "mse"
    replay_capacity: int = 50_000
    hidden_sizes: tuple = (64, 64)
    activation: str = "relu"
    init_seed: int = 0
    mnbe_batch_size: int = 32
    mnbe_network: str = "target"
    mnbe_sample: str = "separate"
    # exploration
    exploration: str = "eps-linear"
    epsilon_start: float = 1.0
    epsilon_final: float = 0.05
    lambda_start: float = 1.0
    lambda_final: float = 0.07
    decay_horizon: int = 120_000
    ucb_c: float = 1.0
    # simulator
    action_count: int = 25
    speed: float = 0.4
    noise_sigma_speed: float = 0.02
    noise_sigma_angle: float = 0.03
    safe_distance: float = 1.2
    collision_penalty: float = -1.0
    n_rays: int = 25
    # charts
    chart_window: int = 0  # transfer-count window width in iterations; 0 -> budget / 40

    def __post_init__(self):
        self.hidden_sizes = tuple(self.hidden_sizes)
        validate(self)

    def deep_config(self, source: bool = False) -> DeepTtqlConfig:
        """Learning config for the target run (or the source run) at this scale."""
        mult = self.scale * (self.source_scale if source else 1.0)
        fields = {f.name for f in dataclasses.fields(DeepTtqlConfig)}
        values = {k: v for k, v in dataclasses.asdict(self).items() if k in fields}
        for key in SCALED_KEYS:
            values[key] = scaled(getattr(self, key), mult)
        values["transfer_enabled"] = self.regime == "ttql" and not source
        return DeepTtqlConfig(**values)

    def physics(self) -> dict:
        return dict(
            action_count=self.action_count,
            speed=self.speed,
            noise_sigma_speed=self.noise_sigma_speed,
            noise_sigma_angle=self.noise_sigma_angle,
            safe_distance=self.safe_distance,
            collision_penalty=self.collision_penalty,
            n_rays=self.n_rays,
        )

    def source_world(self):
        return load_world(self.source_map, **self.physics())

    def target_world(self):
        return load_world(self.target_map, **self.physics())

    def source_key(self) -> str:
        """Cache key for the source network: map contents, seed and everything
        that shapes the source run."""
        h = hashlib.sha256()
        h.update(map_path(self.source_map).read_bytes())
        relevant = dataclasses.asdict(self)
        for k in ("experiment_name", "source_map", "target_map", "regime", "chart_window"):
            relevant.pop(k)
        h.update(dumps_toml(_to_toml_dict(relevant)).encode())
        return h.hexdigest()[:16]


def scaled(count: int, mult: float) -> int:
    return max(1, int(round(count * mult)))


def _check(cond: bool, key: str, message: str) -> None:
    if not cond:
        raise ConfigError(key, message)


def validate(cfg: ExperimentConfig) -> None:
    _check(0 < cfg.gamma < 1, "gamma", f"must lie in (0, 1), got {cfg.gamma}")
    _check(cfg.learning_rate > 0, "learning_rate", "must be > 0")
    _check(cfg.regime in REGIMES, "regime", f"must be one of {REGIMES}")
    _check(cfg.exploration in STRATEGIES, "exploration", f"must be one of {STRATEGIES}")
    _check(cfg.loss == "mse", "loss", "only 'mse' is supported")
    _check(cfg.scale > 0, "scale", "must be > 0")
    _check(cfg.source_scale > 0, "source_scale", "must be > 0")
    _check(0 <= cfg.dropout_rate < 1, "dropout_rate", "must lie in [0, 1)")
    _check(cfg.epsilon_start >= cfg.epsilon_final > 0, "epsilon_final", "need epsilon_start >= epsilon_final > 0")
    _check(cfg.epsilon_start <= 1, "epsilon_start", "must be <= 1")
    _check(cfg.lambda_start >= cfg.lambda_final > 0, "lambda_final", "need lambda_start >= lambda_final > 0")
    _check(cfg.ucb_c > 0, "ucb_c", "must be > 0")
    _check(cfg.action_count >= 2, "action_count", "must be >= 2")
    _check(cfg.speed > 0, "speed", "must be > 0")
    _check(cfg.safe_distance > 0, "safe_distance", "must be > 0")
    _check(cfg.batch_size >= 1, "batch_size", "must be >= 1")
    _check(cfg.chart_window >= 0, "chart_window", "must be >= 0")
    _check(isinstance(cfg.seed, int) and 0 <= cfg.seed < 2**64, "seed", "must be a 64-bit unsigned integer")
    for key in ("source_map", "target_map"):
        try:
            map_path(getattr(cfg, key))
        except FileNotFoundError as exc:
            raise ConfigError(key, str(exc)) from None
    warm = scaled(cfg.warmup_steps, cfg.scale)
    _check(scaled(cfg.max_iterations, cfg.scale) >= warm >= cfg.batch_size, "scale",
           "scaled max_iterations >= scaled warmup_steps >= batch_size must hold")
    try:
        cfg.deep_config()
    except ValueError as exc:
        raise ConfigError(None, str(exc)) from None


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _coerce(key: str, value):
    default = _FIELDS[key].default
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)
        value = float(value) if ok else value
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif isinstance(default, tuple):
        ok = isinstance(value, list) and all(isinstance(v, int) and v > 0 for v in value)
        value = tuple(value) if ok else value
    else:
        ok = True
    if not ok:
        raise ConfigError(key, f"malformed value {value!r}")
    return value


def config_from_dict(data: dict, strict: bool = True, base_dir: Optional[Path] = None) -> ExperimentConfig:
    unknown = sorted(set(data) - set(_FIELDS))
    if unknown:
        if strict:
            raise ConfigError(unknown[0], "unknown key")
        log.warning("ignoring unknown config keys: %s", ", ".join(unknown))
    values = {k: _coerce(k, v) for k, v in data.items() if k in _FIELDS}
    if base_dir is not None:
        for key in ("source_map", "target_map"):
            if key in values and (base_dir / values[key]).is_file():
                values[key] = str(base_dir / values[key])
    return ExperimentConfig(**values)


def config_path(name_or_path) -> Path:
    """A config file path, or the bundled config of that name."""
    if str(name_or_path) in BUNDLED_CONFIGS and not Path(name_or_path).exists():
        return Path(str(resources.files("ttql") / "configs" / f"{name_or_path}.toml"))
    return Path(name_or_path)


def load_config(path, strict: bool = True, **overrides) -> ExperimentConfig:
    """Parse a config file; relative map paths resolve against its directory."""
    path = config_path(path)
    if not path.is_file():
        raise ConfigError(None, f"config file not found: {path}")
    try:
        data = load_toml(path)
    except Exception as exc:  # tomli raises its own decode error type
        raise ConfigError(None, f"{path}: {exc}") from None
    data.update(overrides)
    return config_from_dict(data, strict=strict, base_dir=path.parent)


def _to_toml_dict(values: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in values.items()}


def dumps_config(cfg: ExperimentConfig) -> str:
    return dumps_toml(_to_toml_dict(dataclasses.asdict(cfg)))


def loads_config(text: str, strict: bool = True) -> ExperimentConfig:
    return config_from_dict(loads_toml(text), strict=strict)
