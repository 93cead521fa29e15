"""Exploration strategies: decaying epsilon-greedy, Boltzmann and UCB1."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .mdp import ParameterError

STRATEGIES = ("eps-linear", "eps-exp", "boltzmann", "ucb")


@dataclass(frozen=True)
class DecaySchedule:
    kind: str  # "linear" | "exponential"
    start_value: float
    final_value: float
    decay_horizon: int

    def __post_init__(self):
        if self.kind not in ("linear", "exponential"):
            raise ParameterError(f"unknown decay kind {self.kind!r}")
        if not self.start_value >= self.final_value > 0:
            raise ParameterError("need start_value >= final_value > 0")
        if self.decay_horizon < 1:
            raise ParameterError("decay_horizon must be >= 1")

    def value(self, t: int) -> float:
        return schedule_value(self, t)


def schedule_value(schedule: DecaySchedule, t: int) -> float:
    """Exploration parameter at iteration ``t``.

    Both kinds reach ``final_value`` exactly at ``decay_horizon`` and stay there.
    The exponential kind decays geometrically with ratio
    ``(final/start) ** (1/horizon)``.
    """
    if t < 0:
        raise ParameterError(f"t must be >= 0, got {t}")
    start, final, horizon = schedule.start_value, schedule.final_value, schedule.decay_horizon
    if t >= horizon:
        return final
    if schedule.kind == "linear":
        return start + (final - start) * (t / horizon)
    return max(start * (final / start) ** (t / horizon), final)


def _argmax_random(values: np.ndarray, rng: Optional[np.random.Generator]) -> int:
    best = np.flatnonzero(values == values.max())
    if len(best) == 1 or rng is None:
        return int(best[0])
    return int(best[rng.integers(len(best))])


def _sample(probs: np.ndarray, rng: np.random.Generator) -> int:
    cdf = np.cumsum(probs)
    idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    # guard against landing on a zero-probability tail slot through rounding
    idx = min(idx, len(probs) - 1)
    while probs[idx] == 0.0:
        idx -= 1
    return idx


def epsilon_greedy_probs(q_values, epsilon: float, greedy: int) -> np.ndarray:
    q = np.asarray(q_values, dtype=float)
    n = q.shape[-1]
    if not 0.0 <= epsilon <= 1.0:
        raise ParameterError(f"epsilon must lie in [0, 1], got {epsilon!r}")
    if n < 2:
        if epsilon > 0:
            raise ParameterError("epsilon-greedy needs at least 2 actions when epsilon > 0")
        return np.ones(1)
    probs = np.full(n, epsilon / (n - 1))
    probs[greedy] = 1.0 - epsilon
    return probs


def epsilon_greedy(q_values, epsilon: float, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    """Greedy action gets ``1 - epsilon``, every other action ``epsilon / (A - 1)``.

    Note that ``epsilon = 1`` gives the greedy action probability zero; this is
    the literal two-case rule, not "uniform at random".
    """
    q = np.asarray(q_values, dtype=float)
    greedy = _argmax_random(q, rng)
    probs = epsilon_greedy_probs(q, epsilon, greedy)
    return probs, _sample(probs, rng)


def boltzmann_probs(q_values, lam: float) -> np.ndarray:
    if not lam > 0:
        raise ParameterError(f"lambda must be > 0, got {lam!r}")
    z = np.asarray(q_values, dtype=float) / lam
    z = np.exp(z - z.max())
    return z / z.sum()


def boltzmann(q_values, lam: float, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    probs = boltzmann_probs(q_values, lam)
    return probs, _sample(probs, rng)


@dataclass
class UcbState:
    """Visit counts for UCB1.

    ``counts`` is ``(action_count,)`` for global counts or
    ``(state_count, action_count)`` for per-state counts.
    """

    counts: np.ndarray
    c: float = 1.0
    total: int = 0

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if not self.c > 0:
            raise ParameterError("UCB bonus scale must be > 0")
        self.total = int(self.counts.sum())

    @classmethod
    def empty(cls, action_count: int, c: float = 1.0, state_count: Optional[int] = None):
        shape = (action_count,) if state_count is None else (state_count, action_count)
        return cls(np.zeros(shape, dtype=np.int64), c)

    def row(self, state: Optional[int]) -> np.ndarray:
        if self.counts.ndim == 1:
            return self.counts
        return self.counts[state]


def ucb_select(
    q_values,
    ucb: UcbState,
    t: int,
    state: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> int:
    """UCB1 choice ``argmax q[a] + c * sqrt(ln t / N(a))``; unvisited actions first.

    Increments the chosen action's count.
    """
    if t < 1:
        raise ParameterError(f"t must be >= 1, got {t}")
    counts = ucb.row(state)
    unvisited = np.flatnonzero(counts == 0)
    if len(unvisited):
        action = int(unvisited[0])
    else:
        q = np.asarray(q_values, dtype=float)
        scores = q + ucb.c * np.sqrt(math.log(t) / counts)
        action = _argmax_random(scores, rng)
    counts[action] += 1
    ucb.total += 1
    return action


@dataclass
class Explorer:
    """Picks actions from Q-values under one of the configured strategies."""

    strategy: str
    schedule: Optional[DecaySchedule] = None
    ucb: Optional[UcbState] = None
    _ucb_t: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ParameterError(f"unknown exploration strategy {self.strategy!r}")
        if self.strategy != "ucb" and self.schedule is None:
            raise ParameterError(f"strategy {self.strategy!r} needs a decay schedule")
        if self.strategy == "ucb" and self.ucb is None:
            raise ParameterError("strategy 'ucb' needs a UcbState")

    def param(self, t: int) -> float:
        if self.strategy == "ucb":
            return self.ucb.c
        return schedule_value(self.schedule, t)

    def select(self, q_values, t: int, rng: np.random.Generator, state=None) -> int:
        if self.strategy in ("eps-linear", "eps-exp"):
            return epsilon_greedy(q_values, self.param(t), rng)[1]
        if self.strategy == "boltzmann":
            return boltzmann(q_values, self.param(t), rng)[1]
        key = None if self.ucb.counts.ndim == 1 else state
        n = self._ucb_t.get(key, 0) + 1
        self._ucb_t[key] = n
        return ucb_select(q_values, self.ucb, n, state=key, rng=rng)


def make_explorer(
    strategy: str,
    *,
    epsilon_start: float = 1.0,
    epsilon_final: float = 0.05,
    lambda_start: float = 1.0,
    lambda_final: float = 0.07,
    decay_horizon: int = 120_000,
    ucb_c: float = 1.0,
    action_count: int = 25,
    state_count: Optional[int] = None,
) -> Explorer:
    if strategy == "eps-linear":
        return Explorer(strategy, DecaySchedule("linear", epsilon_start, epsilon_final, decay_horizon))
    if strategy == "eps-exp":
        return Explorer(strategy, DecaySchedule("exponential", epsilon_start, epsilon_final, decay_horizon))
    if strategy == "boltzmann":
        return Explorer(strategy, DecaySchedule("linear", lambda_start, lambda_final, decay_horizon))
    if strategy == "ucb":
        return Explorer(strategy, ucb=UcbState.empty(action_count, ucb_c, state_count))
    raise ParameterError(f"unknown exploration strategy {strategy!r}")
