"""Tabular Q-learning and Target Transfer Q-learning (TTQL).

Q-tables are plain ``(state_count, action_count)`` float arrays. The transfer
rule compares the max-norm Bellman error (MNBE) of the source table and of the
agent's own table on a window of recent transitions; when the source is
strictly better, its values replace the agent's in the bootstrap term.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .envs.grid import TabularMDP, bellman_backup
from .explore import DecaySchedule, make_explorer, schedule_value
from .mdp import EndReason, EpisodeLog, MDPError, ParameterError, Transition, check_gamma


def zeros(state_count: int, action_count: int) -> np.ndarray:
    return np.zeros((state_count, action_count))


def _check_index(q: np.ndarray, tr: Transition) -> None:
    s, n = q.shape
    if not (0 <= tr.state < s and 0 <= tr.next_state < s and 0 <= tr.action < n):
        raise MDPError(
            f"transition ({tr.state}, {tr.action}, {tr.next_state}) out of range for table {q.shape}"
        )


def _bootstrap(q: np.ndarray, tr: Transition) -> float:
    return 0.0 if tr.terminal else float(q[tr.next_state].max())


def q_update(q: np.ndarray, tr: Transition, alpha: float, gamma: float) -> np.ndarray:
    """One Q-learning step, in place. Returns ``q``."""
    _check_index(q, tr)
    s, a = tr.state, tr.action
    q[s, a] = (1 - alpha) * q[s, a] + alpha * (tr.reward + gamma * _bootstrap(q, tr))
    return q


def greedy_policy(q: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Per-state argmax; ties are broken uniformly at random."""
    is_max = q == q.max(axis=1, keepdims=True)
    # random key per entry, masked to the maxima, picks a uniform maximizer
    keys = np.where(is_max, rng.random(q.shape), -1.0)
    return keys.argmax(axis=1)


def q_sup_distance(q1: np.ndarray, q2: np.ndarray) -> float:
    q1, q2 = np.asarray(q1), np.asarray(q2)
    if q1.shape != q2.shape:
        raise ParameterError(f"shape mismatch {q1.shape} vs {q2.shape}")
    return float(np.max(np.abs(q1 - q2)))


def mnbe_tabular(q: np.ndarray, transitions: Sequence[Transition], gamma: float) -> float:
    """Max Bellman residual over sampled transitions (one successor each)."""
    if not transitions:
        raise ParameterError("MNBE needs at least one transition")
    worst = 0.0
    for tr in transitions:
        _check_index(q, tr)
        worst = max(worst, abs(q[tr.state, tr.action] - (tr.reward + gamma * _bootstrap(q, tr))))
    return float(worst)


def mnbe_exhaustive(q: np.ndarray, mdp: TabularMDP, gamma: float) -> float:
    """Exact MNBE over every state-action pair, with the expectation over successors."""
    return float(np.max(np.abs(q - bellman_backup(mdp.mdp(), q, gamma))))


@dataclass(frozen=True)
class TtqlConfig:
    alpha: float = 0.1
    gamma: float = 0.9
    mnbe_window: int = 32

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ParameterError("alpha must lie in (0, 1)")
        check_gamma(self.gamma)
        if self.mnbe_window < 1:
            raise ParameterError("mnbe_window must be >= 1")


def ttql_update(
    main_q: np.ndarray,
    source_q: np.ndarray,
    tr: Transition,
    cfg: TtqlConfig,
    window: Sequence[Transition],
) -> tuple[np.ndarray, bool]:
    """TTQL step, in place on ``main_q``; returns ``(main_q, transfer_used)``.

    Transfer happens only when the source MNBE is strictly lower.
    """
    if main_q.shape != source_q.shape:
        raise ParameterError(f"shape mismatch {main_q.shape} vs {source_q.shape}")
    m_src = mnbe_tabular(source_q, window, cfg.gamma)
    m_old = mnbe_tabular(main_q, window, cfg.gamma)
    if m_src < m_old:
        _check_index(main_q, tr)
        s, a = tr.state, tr.action
        target = tr.reward + cfg.gamma * _bootstrap(source_q, tr)
        main_q[s, a] = (1 - cfg.alpha) * main_q[s, a] + cfg.alpha * target
        return main_q, True
    return q_update(main_q, tr, cfg.alpha, cfg.gamma), False


@dataclass
class TabularRun:
    q: np.ndarray
    episodes: list = field(default_factory=list)
    transfer_used: Optional[np.ndarray] = None
    transitions: Optional[list] = None  # filled when training with record=True


def train_tabular(
    mdp,
    steps: int,
    cfg: TtqlConfig,
    rng: np.random.Generator,
    *,
    strategy: str = "eps-linear",
    epsilon_start: float = 1.0,
    epsilon_final: float = 0.05,
    decay_horizon: int = 120_000,
    source_q: Optional[np.ndarray] = None,
    initial_q: Optional[np.ndarray] = None,
    max_episode_steps: Optional[int] = None,
    record: bool = False,
    **explore_kwargs,
) -> TabularRun:
    """Run Q-learning (or TTQL when ``source_q`` is given) for ``steps`` steps.

    Epsilon-greedy strategies run on plain Python lists; the draws follow the
    same two-case distribution as :func:`ttql.explore.epsilon_greedy`. Other
    strategies go through :class:`ttql.explore.Explorer`.
    """
    m = mdp.mdp()
    S, A = m.state_count, m.action_count
    gamma, alpha = cfg.gamma, cfg.alpha
    q = (np.zeros((S, A)) if initial_q is None else np.array(initial_q, dtype=float)).tolist()
    rewards = m.rewards.tolist()
    terminal = m.terminal.tolist()
    cdf = m._cdf.tolist()
    det = m.deterministic
    nxt_table = m.transitions.argmax(axis=2).tolist() if det else None
    py = random.Random(int(rng.integers(2**63)))
    rand, randrange = py.random, py.randrange

    fast = strategy in ("eps-linear", "eps-exp")
    if fast:
        kind = "linear" if strategy == "eps-linear" else "exponential"
        sched = DecaySchedule(kind, epsilon_start, epsilon_final, decay_horizon)
    else:
        explorer = make_explorer(strategy, action_count=A, state_count=S, decay_horizon=decay_horizon, **explore_kwargs)

    src = None if source_q is None else np.asarray(source_q, dtype=float)
    if src is not None and src.shape != (S, A):
        raise ParameterError(f"source table shape {src.shape} does not match ({S}, {A})")
    src_rows = None if src is None else src.tolist()
    src_v = None if src is None else [0.0 if terminal[s] else max(src_rows[s]) for s in range(S)]
    window = deque(maxlen=cfg.mnbe_window)
    flags = np.zeros(steps, dtype=bool) if src is not None else None

    run = TabularRun(q=None, transitions=[] if record else None)
    s = m.start
    ep_start, ep_steps, ep_reward = 0, 0, 0.0
    for t in range(steps):
        row = q[s]
        if fast:
            eps = schedule_value(sched, t)
            best = max(row)
            ties = [i for i in range(A) if row[i] == best]
            g = ties[0] if len(ties) == 1 else ties[randrange(len(ties))]
            if rand() < 1.0 - eps:
                a = g
            else:
                a = randrange(A - 1)
                if a >= g:
                    a += 1
        else:
            a = explorer.select(np.array(row), t, rng, state=s)
        if det:
            s2 = nxt_table[s][a]
        else:
            c = cdf[s][a]
            u = rand() * c[-1]
            s2 = 0
            while s2 < S - 1 and c[s2] <= u:
                s2 += 1
        r = rewards[s][a]
        term = terminal[s2]
        if record:
            run.transitions.append(Transition(s, a, r, s2, term))

        use_source = False
        if src is not None:
            window.append((s, a, r, s2, term))
            m_src = m_old = 0.0
            for ws, wa, wr, ws2, wt in window:
                m_src = max(m_src, abs(src_rows[ws][wa] - (wr + (0.0 if wt else gamma * src_v[ws2]))))
                m_old = max(m_old, abs(q[ws][wa] - (wr + (0.0 if wt else gamma * max(q[ws2])))))
            use_source = m_src < m_old
            flags[t] = use_source
        if term:
            boot = 0.0
        elif use_source:
            boot = src_v[s2]
        else:
            boot = max(q[s2])
        row[a] = (1 - alpha) * row[a] + alpha * (r + gamma * boot)

        ep_steps += 1
        ep_reward += r
        if term or (max_episode_steps and ep_steps >= max_episode_steps):
            reason = EndReason.COLLISION if term else EndReason.ITERATION_CAP
            run.episodes.append(EpisodeLog(len(run.episodes), ep_start, ep_steps, ep_reward, reason))
            s = m.start
            ep_start, ep_steps, ep_reward = t + 1, 0, 0.0
        else:
            s = s2
    if ep_steps:
        run.episodes.append(EpisodeLog(len(run.episodes), ep_start, ep_steps, ep_reward, EndReason.ITERATION_CAP))
    run.q = np.array(q)
    run.transfer_used = flags
    return run


def save_qtable(q: np.ndarray, path) -> None:
    """Flat text: ``states actions`` header, then one row of reals per state."""
    Path(path).write_text(format_qtable(q))


def format_qtable(q: np.ndarray) -> str:
    q = np.asarray(q, dtype=float)
    lines = [f"{q.shape[0]} {q.shape[1]}"]
    lines += [" ".join(repr(float(v)) for v in row) for row in q]
    return "\n".join(lines) + "\n"


def load_qtable(path) -> np.ndarray:
    tokens = Path(path).read_text().split()
    if len(tokens) < 2:
        raise ParameterError(f"{path}: missing 'states actions' header")
    s, a = int(tokens[0]), int(tokens[1])
    values = [float(v) for v in tokens[2:]]
    if len(values) != s * a:
        raise ParameterError(f"{path}: expected {s * a} values, found {len(values)}")
    return np.array(values).reshape(s, a)
