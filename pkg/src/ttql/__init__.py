"""Target Transfer Q-learning with pluggable exploration, tabular and deep."""

__version__ = "0.1.0"
