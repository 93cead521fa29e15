"""Experiment harness: configs, runs, CSV logs, comparisons and charts."""

from .charts import emit_charts
from .compare import BudgetMismatch, compare_runs, summary_csv, summary_table, write_summary
from .config import ConfigError, ExperimentConfig, dumps_config, load_config, loads_config
from .logs import EPISODE_FIELDS, find_runs, read_run
from .run import cached_source, run_experiment, train_source

__all__ = [
    "BudgetMismatch",
    "ConfigError",
    "EPISODE_FIELDS",
    "ExperimentConfig",
    "cached_source",
    "compare_runs",
    "dumps_config",
    "emit_charts",
    "find_runs",
    "load_config",
    "loads_config",
    "read_run",
    "run_experiment",
    "summary_csv",
    "summary_table",
    "train_source",
    "write_summary",
]
