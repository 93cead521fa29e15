"""Deep Q-learning and deep TTQL.

Three networks take part in a target-task run: the *main* network being
trained, the *target* network that supplies bootstrap values and is refreshed
periodically, and an optional frozen *source* network trained on another map.
On every training tick both the target and the source network are scored by
their max-norm Bellman error on one shared replay sample; when the source
scores strictly lower it supplies the bootstrap values for that tick.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .explore import STRATEGIES, make_explorer
from .mdp import EpisodeLog, ParameterError, Transition, check_gamma, run_episode
from .net import (
    AdamState,
    Batch,
    DenseNetwork,
    adam_step,
    average_parameters,
    forward,
    mse_grad,
)


class ReplayUnderflow(RuntimeError):
    pass


@dataclass
class TransitionBatch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray

    @classmethod
    def from_transitions(cls, transitions: Sequence[Transition]) -> "TransitionBatch":
        if not transitions:
            raise ParameterError("empty transition batch")
        return cls(
            np.array([np.atleast_1d(t.state) for t in transitions], dtype=float),
            np.array([t.action for t in transitions], dtype=np.int64),
            np.array([t.reward for t in transitions], dtype=float),
            np.array([np.atleast_1d(t.next_state) for t in transitions], dtype=float),
            np.array([t.terminal for t in transitions], dtype=bool),
        )

    def __len__(self) -> int:
        return len(self.actions)

    def permuted(self, order) -> "TransitionBatch":
        return TransitionBatch(*(a[order] for a in dataclasses.astuple(self)))


def _as_batch(batch: Union[TransitionBatch, Sequence[Transition]]) -> TransitionBatch:
    return batch if isinstance(batch, TransitionBatch) else TransitionBatch.from_transitions(batch)


class ReplayBuffer:
    """Fixed-capacity FIFO of transitions over preallocated arrays."""

    def __init__(self, capacity: int, observation_dim: int):
        if capacity < 1:
            raise ParameterError("replay capacity must be >= 1")
        self.capacity = capacity
        self.size = 0
        self._next = 0
        self._s = np.zeros((capacity, observation_dim))
        self._a = np.zeros(capacity, dtype=np.int64)
        self._r = np.zeros(capacity)
        self._s2 = np.zeros((capacity, observation_dim))
        self._term = np.zeros(capacity, dtype=bool)

    def __len__(self) -> int:
        return self.size

    def push(self, tr: Transition) -> None:
        i = self._next
        self._s[i] = tr.state
        self._a[i] = tr.action
        self._r[i] = tr.reward
        self._s2[i] = tr.next_state
        self._term[i] = tr.terminal
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def _transition(self, i: int) -> Transition:
        return Transition(self._s[i].copy(), int(self._a[i]), float(self._r[i]), self._s2[i].copy(), bool(self._term[i]))

    def items(self) -> list:
        """Stored transitions, oldest first."""
        start = self._next if self.size == self.capacity else 0
        return [self._transition((start + k) % self.capacity) for k in range(self.size)]

    def _indices(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if n < 0:
            raise ParameterError("sample size must be >= 0")
        if n == 0:
            return np.zeros(0, dtype=np.int64)
        # draws are with replacement, so any non-empty buffer can serve them
        if self.size == 0:
            raise ReplayUnderflow(f"cannot sample {n} transitions from an empty buffer")
        return rng.integers(0, self.size, n)

    def sample(self, n: int, rng: np.random.Generator) -> list:
        """``n`` uniform draws with replacement."""
        return [self._transition(i) for i in self._indices(n, rng)]

    def sample_batch(self, n: int, rng: np.random.Generator) -> TransitionBatch:
        """Array form of :meth:`sample`; consumes the random stream identically."""
        idx = self._indices(n, rng)
        return TransitionBatch(self._s[idx], self._a[idx], self._r[idx], self._s2[idx], self._term[idx])


def replay_push(buffer: ReplayBuffer, tr: Transition) -> None:
    buffer.push(tr)


def replay_sample(buffer: ReplayBuffer, n: int, rng: np.random.Generator) -> list:
    return buffer.sample(n, rng)


def _bellman_targets(batch: TransitionBatch, bootstrap_net: DenseNetwork, gamma: float) -> np.ndarray:
    nxt = forward(bootstrap_net, batch.next_states).max(axis=1)
    return batch.rewards + gamma * np.where(batch.terminals, 0.0, nxt)


def td_targets(batch, bootstrap_net: DenseNetwork, gamma: float) -> Batch:
    """Regression targets ``r + gamma * max_b Q_boot(s', b)`` (just ``r`` on terminal rows)."""
    b = _as_batch(batch)
    return Batch(b.states, b.actions, _bellman_targets(b, bootstrap_net, gamma))


def mnbe_batch(net: DenseNetwork, batch, gamma: float) -> float:
    """Max Bellman residual of ``net`` against its own bootstrap over ``batch``."""
    b = _as_batch(batch)
    q = forward(net, b.states)[np.arange(len(b)), b.actions]
    return float(np.max(np.abs(q - _bellman_targets(b, net, gamma))))


@dataclass
class DeepTtqlConfig:
    gamma: float = 0.99
    learning_rate: float = 2e-6
    training_interval: int = 16
    target_update_period: int = 15_000
    batch_size: int = 32
    warmup_steps: int = 5_000
    max_iterations: int = 150_000
    exploration: str = "eps-linear"
    epsilon_start: float = 1.0
    epsilon_final: float = 0.05
    lambda_start: float = 1.0
    lambda_final: float = 0.07
    decay_horizon: int = 120_000
    ucb_c: float = 1.0
    dropout_rate: float = 0.1
    transfer_enabled: bool = False
    mnbe_batch_size: Optional[int] = None  # None -> batch_size
    mnbe_network: str = "target"  # which own network is scored against the source
    mnbe_sample: str = "separate"  # or "training": reuse the training batch
    replay_capacity: int = 50_000
    hidden_sizes: tuple = (64, 64)
    activation: str = "relu"
    init_seed: int = 0

    def __post_init__(self):
        check_gamma(self.gamma)
        if self.mnbe_batch_size is None:
            self.mnbe_batch_size = self.batch_size
        self.hidden_sizes = tuple(int(h) for h in self.hidden_sizes)
        if not self.learning_rate > 0:
            raise ParameterError("learning_rate must be > 0")
        if self.training_interval < 1:
            raise ParameterError("training_interval must be >= 1")
        if self.target_update_period < self.training_interval:
            raise ParameterError("target_update_period must be >= training_interval")
        if not 1 <= self.batch_size <= self.warmup_steps:
            raise ParameterError("need 1 <= batch_size <= warmup_steps")
        if self.mnbe_batch_size < 1:
            raise ParameterError("mnbe_batch_size must be >= 1")
        if self.exploration not in STRATEGIES:
            raise ParameterError(f"exploration must be one of {STRATEGIES}")
        if self.mnbe_network not in ("target", "main"):
            raise ParameterError("mnbe_network must be 'target' or 'main'")
        if self.mnbe_sample not in ("separate", "training"):
            raise ParameterError("mnbe_sample must be 'separate' or 'training'")
        if self.max_iterations < 1 or self.replay_capacity < self.batch_size:
            raise ParameterError("max_iterations must be >= 1 and replay_capacity >= batch_size")

    def layer_sizes(self, observation_dim: int, action_count: int) -> list:
        return [observation_dim, *self.hidden_sizes, action_count]


@dataclass
class AgentNetworks:
    main: DenseNetwork
    target: DenseNetwork
    source: Optional[DenseNetwork] = None

    def __post_init__(self):
        if not self.main.same_shape(self.target):
            raise ParameterError("main and target networks differ in shape")
        if self.source is not None and not self.main.same_shape(self.source):
            raise ParameterError("source network shape does not match the main network")


@dataclass
class TickMetrics:
    trained: bool = False
    transfer_used: bool = False
    loss: Optional[float] = None
    mnbe_main: Optional[float] = None
    mnbe_source: Optional[float] = None
    synced: bool = False


def sync_target(nets: AgentNetworks) -> None:
    """Average main and target; the average becomes both networks."""
    avg = average_parameters(nets.main, nets.target)
    nets.main.load_params(avg.params())
    nets.target.load_params(avg.params())


def train_tick(
    nets: AgentNetworks,
    buffer: ReplayBuffer,
    cfg: DeepTtqlConfig,
    t: int,
    opt: AdamState,
    rng: np.random.Generator,
) -> TickMetrics:
    """Training work for iteration ``t``; see the module docstring."""
    if t < 0:
        raise ParameterError("t must be >= 0")
    metrics = TickMetrics()
    if t < cfg.warmup_steps:
        return metrics
    if t % cfg.training_interval == 0:
        if cfg.mnbe_sample == "separate":
            mb = buffer.sample_batch(cfg.mnbe_batch_size, rng)
            tb = buffer.sample_batch(cfg.batch_size, rng)
        else:
            tb = mb = buffer.sample_batch(cfg.batch_size, rng)
        own = nets.target if cfg.mnbe_network == "target" else nets.main
        metrics.mnbe_main = mnbe_batch(own, mb, cfg.gamma)
        bootstrap = nets.target
        if cfg.transfer_enabled and nets.source is not None:
            metrics.mnbe_source = mnbe_batch(nets.source, mb, cfg.gamma)
            if metrics.mnbe_source < metrics.mnbe_main:
                metrics.transfer_used = True
                bootstrap = nets.source
        targets = td_targets(tb, bootstrap, cfg.gamma)
        metrics.loss, grads = mse_grad(nets.main, targets, rng)
        adam_step(nets.main.params(), grads, opt, cfg.learning_rate)
        metrics.trained = True
    if t > 0 and t % cfg.target_update_period == 0:
        sync_target(nets)
        metrics.synced = True
    return metrics


TICK_FIELDS = ("iteration", "loss", "mnbe_main", "mnbe_source", "transfer_used", "exploration_param")


@dataclass
class RunLog:
    episodes: list = field(default_factory=list)
    ticks: list = field(default_factory=list)  # dicts keyed by TICK_FIELDS
    config_snapshot: dict = field(default_factory=dict)
    seed: int = 0

    @property
    def total_iterations(self) -> int:
        return sum(e.step_count for e in self.episodes)


class DeepAgent:
    """Acts with the main network and runs a training tick after every step."""

    def __init__(self, nets: AgentNetworks, cfg: DeepTtqlConfig, observation_dim: int, action_count: int,
                 train_rng: np.random.Generator):
        self.nets = nets
        self.cfg = cfg
        self.buffer = ReplayBuffer(cfg.replay_capacity, observation_dim)
        self.opt = AdamState.zeros_like(nets.main.params())
        self.explorer = make_explorer(
            cfg.exploration,
            epsilon_start=cfg.epsilon_start,
            epsilon_final=cfg.epsilon_final,
            lambda_start=cfg.lambda_start,
            lambda_final=cfg.lambda_final,
            decay_horizon=cfg.decay_horizon,
            ucb_c=cfg.ucb_c,
            action_count=action_count,
        )
        self.train_rng = train_rng
        self.t = 0
        self.ticks = []

    def select_action(self, state, rng: np.random.Generator) -> int:
        return self.explorer.select(forward(self.nets.main, state), self.t, rng)

    def learn(self, tr: Transition) -> None:
        self.buffer.push(tr)
        m = train_tick(self.nets, self.buffer, self.cfg, self.t, self.opt, self.train_rng)
        if m.trained:
            self.ticks.append({
                "iteration": self.t,
                "loss": m.loss,
                "mnbe_main": m.mnbe_main,
                "mnbe_source": m.mnbe_source,
                "transfer_used": int(m.transfer_used),
                "exploration_param": self.explorer.param(self.t),
            })
        self.t += 1


def _streams(seed: int) -> tuple:
    episode_ss, train_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(episode_ss), np.random.default_rng(train_ss)


def _run(env, cfg: DeepTtqlConfig, nets: AgentNetworks, seed: int) -> RunLog:
    episode_rng, train_rng = _streams(seed)
    agent = DeepAgent(nets, cfg, env.observation_dim, env.action_count, train_rng)
    log = RunLog(config_snapshot=dataclasses.asdict(cfg), seed=seed)
    while agent.t < cfg.max_iterations:
        start = agent.t
        ep = run_episode(
            env, agent, cfg.max_iterations - start, episode_rng,
            episode_index=len(log.episodes), start_iteration=start,
        )
        log.episodes.append(ep)
    log.ticks = agent.ticks
    return log


def initial_network(env, cfg: DeepTtqlConfig) -> DenseNetwork:
    """The preset starting point shared by source and target runs."""
    return DenseNetwork.initialize(
        cfg.layer_sizes(env.observation_dim, env.action_count),
        cfg.init_seed,
        cfg.activation,
        cfg.dropout_rate,
    )


def deep_q_learning(env, cfg: DeepTtqlConfig, seed: int, init: Optional[DenseNetwork] = None):
    """Plain deep Q-learning; returns ``(main_network, RunLog)``."""
    if cfg.transfer_enabled:
        raise ParameterError("deep_q_learning runs without transfer; set transfer_enabled=False")
    main = (init or initial_network(env, cfg)).copy()
    main.dropout_rate = cfg.dropout_rate
    nets = AgentNetworks(main, main.copy())
    log = _run(env, cfg, nets, seed)
    return nets.main, log


def train_source_task(env, cfg: DeepTtqlConfig, seed: int):
    """Train on the source map; the returned main network is the source artifact."""
    return deep_q_learning(env, cfg, seed)


REGIMES = ("no_transfer", "warm_start", "ttql")


def regime_of(source: Optional[DenseNetwork], init_from_source: bool, transfer_enabled: bool) -> str:
    if init_from_source and transfer_enabled:
        raise ParameterError("warm start and runtime transfer are separate regimes; pick one")
    if (init_from_source or transfer_enabled) and source is None:
        raise ParameterError("this regime needs source network parameters")
    if source is not None and not (init_from_source or transfer_enabled):
        raise ParameterError("source parameters given but neither warm start nor transfer is enabled")
    if init_from_source:
        return "warm_start"
    return "ttql" if transfer_enabled else "no_transfer"


def train_target_task(
    env,
    cfg: DeepTtqlConfig,
    seed: int,
    source_params: Optional[DenseNetwork] = None,
    init_from_source: bool = False,
):
    """Target-map training under one of the three regimes.

    ``no_transfer``: fresh preset start. ``warm_start``: main starts from the
    source parameters. ``ttql``: fresh preset start plus the frozen source
    network in the transfer rule. Returns ``(main_network, RunLog)``.
    """
    regime = regime_of(source_params, init_from_source, cfg.transfer_enabled)
    init = source_params if regime == "warm_start" else initial_network(env, cfg)
    main = init.copy()
    main.dropout_rate = cfg.dropout_rate
    source = None
    if regime == "ttql":
        source = source_params.copy()
        source.dropout_rate = 0.0
    nets = AgentNetworks(main, main.copy(), source)
    log = _run(env, cfg, nets, seed)
    return nets.main, log
