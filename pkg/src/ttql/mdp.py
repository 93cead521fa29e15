"""MDP interaction contract shared by environments, agents and trainers.

An environment exposes ``reset()`` and ``step(action, rng)``; an agent exposes
``select_action(state, rng)`` and ``learn(transition)``. ``run_episode`` drives
one episode between them and returns an :class:`EpisodeLog`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Protocol, Sequence

import numpy as np


class MDPError(Exception):
    """Raised when the interaction contract is violated."""


class ParameterError(ValueError):
    """Raised for out-of-range hyperparameters."""


@dataclass(frozen=True)
class Transition:
    state: Any
    action: int
    reward: float
    next_state: Any
    terminal: bool


class EndReason(str, Enum):
    COLLISION = "collision"
    ITERATION_CAP = "iteration_cap"


@dataclass(frozen=True)
class EpisodeLog:
    episode_index: int
    start_iteration: int
    step_count: int
    cumulative_reward: float
    ended_by: EndReason


class Environment(Protocol):
    action_count: int
    observation_dim: int

    def reset(self) -> Any: ...

    def step(self, action: int, rng: np.random.Generator) -> tuple[Any, float, bool]: ...


class Agent(Protocol):
    def select_action(self, state: Any, rng: np.random.Generator) -> int: ...

    def learn(self, transition: Transition) -> None: ...


def check_gamma(gamma: float) -> float:
    if not 0.0 < gamma < 1.0:
        raise ParameterError(f"gamma must lie in (0, 1), got {gamma!r}")
    return float(gamma)


def discounted_return(rewards: Sequence[float], gamma: float) -> float:
    """Return ``sum_t gamma**t * rewards[t]``."""
    check_gamma(gamma)
    total = 0.0
    for r in reversed(rewards):
        if not math.isfinite(r):
            raise ParameterError(f"non-finite reward {r!r}")
        total = r + gamma * total
    return total


def run_episode(
    env: Environment,
    agent: Agent,
    max_steps: int,
    rng: np.random.Generator,
    *,
    episode_index: int = 0,
    start_iteration: int = 0,
) -> EpisodeLog:
    """Reset ``env`` and play until a terminal transition or ``max_steps``.

    The agent learns from every transition, including the last one of a
    truncated episode; truncation is never reported to it as terminal.
    """
    if max_steps < 1:
        raise ParameterError(f"max_steps must be >= 1, got {max_steps}")
    state = env.reset()
    total = 0.0
    for step in range(1, max_steps + 1):
        action = agent.select_action(state, rng)
        if not (isinstance(action, (int, np.integer)) and 0 <= action < env.action_count):
            raise MDPError(
                f"agent returned action {action!r}; valid range is [0, {env.action_count})"
            )
        action = int(action)
        next_state, reward, terminal = env.step(action, rng)
        total += reward
        agent.learn(Transition(state, action, float(reward), next_state, bool(terminal)))
        if terminal:
            return EpisodeLog(episode_index, start_iteration, step, total, EndReason.COLLISION)
        state = next_state
    return EpisodeLog(episode_index, start_iteration, max_steps, total, EndReason.ITERATION_CAP)
