"""Small tabular MDPs with known models, used as exact oracles."""

from __future__ import annotations

from importlib import resources
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from ..mdp import MDPError, ParameterError, check_gamma
from ..util import load_toml

# up, right, down, left
MOVES = ((-1, 0), (0, 1), (1, 0), (0, -1))


class ConvergenceError(RuntimeError):
    pass


@dataclass
class TabularMDP:
    """Finite MDP with explicit model.

    ``transitions[s, a, s2]`` is the probability of ``s2``; ``rewards[s, a]`` is
    the reward for taking ``a`` in ``s``. Terminal states are absorbing with
    value zero and may not be stepped from.
    """

    transitions: np.ndarray
    rewards: np.ndarray
    terminal: np.ndarray
    start: int = 0
    _state: Optional[int] = field(default=None, repr=False)

    def __post_init__(self):
        self.transitions = np.asarray(self.transitions, dtype=float)
        self.rewards = np.asarray(self.rewards, dtype=float)
        self.terminal = np.asarray(self.terminal, dtype=bool)
        s, a, s2 = self.transitions.shape
        if s != s2 or self.rewards.shape != (s, a) or self.terminal.shape != (s,):
            raise ParameterError("inconsistent model shapes")
        if not np.allclose(self.transitions.sum(axis=2), 1.0):
            raise ParameterError("transition rows must sum to 1")
        if not np.all(np.isfinite(self.rewards)):
            raise ParameterError("rewards must be finite")
        if self.terminal[self.start]:
            raise ParameterError("start state is terminal")
        self._cdf = np.cumsum(self.transitions, axis=2)

    @property
    def state_count(self) -> int:
        return self.transitions.shape[0]

    @property
    def action_count(self) -> int:
        return self.transitions.shape[1]

    @property
    def observation_dim(self) -> int:
        return 1

    @property
    def deterministic(self) -> bool:
        return bool(np.all((self.transitions == 0) | (self.transitions == 1)))

    def sample_next(self, state: int, action: int, u: float) -> int:
        cdf = self._cdf[state, action]
        return min(int(np.searchsorted(cdf, u * cdf[-1], side="right")), self.state_count - 1)

    def reset(self) -> int:
        self._state = self.start
        return self.start

    def step(self, action: int, rng: np.random.Generator) -> tuple[int, float, bool]:
        s = self._state
        if s is None or self.terminal[s]:
            raise MDPError("step called on a terminal or un-reset environment")
        nxt = self.sample_next(s, action, rng.random())
        self._state = nxt
        return nxt, float(self.rewards[s, action]), bool(self.terminal[nxt])

    def mdp(self) -> "TabularMDP":
        return self


@dataclass
class GridWorld:
    """Rectangular grid; moves off the edge leave the agent in place.

    With probability ``slip_prob`` the move direction is drawn uniformly from
    all four directions instead of the chosen one.
    """

    rows: int
    cols: int
    start: tuple[int, int]
    terminal_cells: frozenset
    reward_map: np.ndarray  # (rows * cols, 4)
    slip_prob: float = 0.0

    def __post_init__(self):
        self.terminal_cells = frozenset(tuple(c) for c in self.terminal_cells)
        self.reward_map = np.asarray(self.reward_map, dtype=float)
        if not 0.0 <= self.slip_prob < 1.0:
            raise ParameterError("slip_prob must lie in [0, 1)")
        if self.reward_map.shape != (self.rows * self.cols, 4):
            raise ParameterError("reward_map must have shape (rows*cols, 4)")
        for cell in [self.start, *self.terminal_cells]:
            if not (0 <= cell[0] < self.rows and 0 <= cell[1] < self.cols):
                raise ParameterError(f"cell {cell} outside the grid")
        if not self.terminal_cells:
            raise ParameterError("at least one terminal cell is required")
        self._mdp = self._build()
        if not self._reachable_terminal():
            raise ParameterError("no terminal cell reachable from start")

    @classmethod
    def simple(cls, rows, cols, start, terminals: dict, step_reward=0.0, slip_prob=0.0):
        """Rewards from entering cells: ``terminals[cell]`` on entering a terminal
        cell along the intended move, ``step_reward`` otherwise."""
        rewards = np.full((rows * cols, 4), float(step_reward))
        for r in range(rows):
            for c in range(cols):
                for a, (dr, dc) in enumerate(MOVES):
                    target = (min(max(r + dr, 0), rows - 1), min(max(c + dc, 0), cols - 1))
                    if target in terminals:
                        rewards[r * cols + c, a] = terminals[target]
        return cls(rows, cols, tuple(start), frozenset(terminals), rewards, slip_prob)

    def index(self, cell) -> int:
        return cell[0] * self.cols + cell[1]

    def cell(self, index: int) -> tuple[int, int]:
        return divmod(index, self.cols)

    def _build(self) -> TabularMDP:
        n = self.rows * self.cols
        p = np.zeros((n, 4, n))
        terminal = np.zeros(n, dtype=bool)
        for cell in self.terminal_cells:
            terminal[self.index(cell)] = True
        for s in range(n):
            r, c = self.cell(s)
            if terminal[s]:
                p[s, :, s] = 1.0
                continue
            dest = [
                self.index((min(max(r + dr, 0), self.rows - 1), min(max(c + dc, 0), self.cols - 1)))
                for dr, dc in MOVES
            ]
            for a in range(4):
                p[s, a, dest[a]] += 1.0 - self.slip_prob
                for d in dest:
                    p[s, a, d] += self.slip_prob / 4
        rewards = self.reward_map.copy()
        rewards[terminal] = 0.0
        return TabularMDP(p, rewards, terminal, self.index(self.start))

    def _reachable_terminal(self) -> bool:
        m = self._mdp
        seen, frontier = {m.start}, [m.start]
        while frontier:
            s = frontier.pop()
            if m.terminal[s]:
                return True
            for s2 in np.flatnonzero(m.transitions[s].sum(axis=0) > 0):
                if s2 not in seen:
                    seen.add(int(s2))
                    frontier.append(int(s2))
        return False

    def mdp(self) -> TabularMDP:
        return self._mdp


def bellman_backup(mdp: TabularMDP, q: np.ndarray, gamma: float) -> np.ndarray:
    """Apply the Bellman optimality operator once. Terminal rows map to zero."""
    v = np.where(mdp.terminal, 0.0, q.max(axis=1))
    out = mdp.rewards + gamma * mdp.transitions @ v
    out[mdp.terminal] = 0.0
    return out


def grid_value_iteration(world, gamma: float, tol: float = 1e-10, max_iterations: int = 1_000_000) -> np.ndarray:
    """Optimal Q-table by fixed-point iteration; Bellman residual <= ``tol``."""
    check_gamma(gamma)
    if not tol > 0:
        raise ParameterError("tol must be > 0")
    mdp = world.mdp()
    q = np.zeros_like(mdp.rewards)
    for _ in range(max_iterations):
        nxt = bellman_backup(mdp, q, gamma)
        if np.max(np.abs(nxt - q)) <= tol:
            return q
        q = nxt
    raise ConvergenceError(f"value iteration did not reach tol={tol} in {max_iterations} sweeps")


def random_gridworld(rng: np.random.Generator, rows=None, cols=None, slip_prob=None) -> GridWorld:
    """Random grid with uniform(-1, 1) rewards and one to three terminal cells."""
    rows = rows or int(rng.integers(2, 6))
    cols = cols or int(rng.integers(2, 6))
    n = rows * cols
    slip = float(rng.uniform(0, 0.4)) if slip_prob is None else slip_prob
    while True:
        k = int(rng.integers(1, min(3, n - 1) + 1))
        cells = rng.choice(n, size=k + 1, replace=False)
        start = divmod(int(cells[0]), cols)
        terminals = frozenset(divmod(int(c), cols) for c in cells[1:])
        try:
            return GridWorld(rows, cols, start, terminals, rng.uniform(-1, 1, (n, 4)), slip)
        except ParameterError:
            continue


BUNDLED_GRIDS = ("grid5x5",)


def load_grid(path: Union[str, Path]) -> GridWorld:
    """Read a grid description from a file or a bundled grid name.

    Keys: ``rows``, ``cols``, ``start``, ``step_reward``, ``slip_prob``, a
    ``[[terminal]]`` array of ``{cell, reward}`` and optional ``[[reward]]``
    overrides ``{cell, action, value}``.
    """
    if str(path) in BUNDLED_GRIDS:
        path = resources.files("ttql") / "maps" / f"{path}.toml"
    data = load_toml(path)
    known = {"name", "rows", "cols", "start", "step_reward", "slip_prob", "terminal", "reward"}
    unknown = set(data) - known
    if unknown:
        raise ParameterError(f"unknown grid keys: {sorted(unknown)}")
    terminals = {tuple(t["cell"]): float(t.get("reward", 0.0)) for t in data.get("terminal", [])}
    world = GridWorld.simple(
        int(data["rows"]),
        int(data["cols"]),
        tuple(data.get("start", (0, 0))),
        terminals,
        float(data.get("step_reward", 0.0)),
        float(data.get("slip_prob", 0.0)),
    )
    if data.get("reward"):
        rewards = world.reward_map.copy()
        for item in data["reward"]:
            rewards[world.index(tuple(item["cell"])), int(item["action"])] = float(item["value"])
        world = GridWorld(world.rows, world.cols, world.start, world.terminal_cells, rewards, world.slip_prob)
    return world


def chain_mdp(rewards) -> TabularMDP:
    """Deterministic one-action chain ``s0 -> s1 -> ... -> terminal``."""
    n = len(rewards) + 1
    p = np.zeros((n, 1, n))
    for s in range(n - 1):
        p[s, 0, s + 1] = 1.0
    p[n - 1, 0, n - 1] = 1.0
    r = np.zeros((n, 1))
    r[: n - 1, 0] = rewards
    terminal = np.zeros(n, dtype=bool)
    terminal[-1] = True
    return TabularMDP(p, r, terminal, 0)
