"""Dense feed-forward Q-network with dropout, MSE backprop and Adam, in numpy."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .mdp import ParameterError

MAGIC = b"TTQLNET"
FORMAT_VERSION = 1
ACTIVATIONS = ("relu", "tanh")


@dataclass
class DenseNetwork:
    layer_sizes: list
    weights: list  # weights[i] has shape (layer_sizes[i], layer_sizes[i + 1])
    biases: list
    activation: str = "relu"
    dropout_rate: float = 0.0

    def __post_init__(self):
        self.layer_sizes = [int(n) for n in self.layer_sizes]
        if len(self.layer_sizes) < 2:
            raise ParameterError("need at least input and output sizes")
        if self.activation not in ACTIVATIONS:
            raise ParameterError(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ParameterError("dropout_rate must lie in [0, 1)")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.layer_sizes[i], self.layer_sizes[i + 1]) or b.shape != (self.layer_sizes[i + 1],):
                raise ParameterError(f"layer {i} parameter shapes do not match layer_sizes")

    @classmethod
    def initialize(cls, layer_sizes: Sequence[int], seed: int, activation="relu", dropout_rate=0.0):
        """Glorot-uniform weights from ``seed``, zero biases."""
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            limit = np.sqrt(6.0 / (n_in + n_out))
            weights.append(rng.uniform(-limit, limit, (n_in, n_out)))
            biases.append(np.zeros(n_out))
        return cls(list(layer_sizes), weights, biases, activation, dropout_rate)

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    def params(self) -> list:
        """Parameter arrays in layer order ``W0, b0, W1, b1, ...`` (live views)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "DenseNetwork":
        return DenseNetwork(
            list(self.layer_sizes),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
            self.dropout_rate,
        )

    def load_params(self, params: Sequence[np.ndarray]) -> None:
        for dst, src in zip(self.params(), params):
            dst[...] = src

    def same_shape(self, other: "DenseNetwork") -> bool:
        return self.layer_sizes == other.layer_sizes


@dataclass
class Batch:
    inputs: np.ndarray
    target_action: np.ndarray
    target_value: np.ndarray

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.target_action = np.asarray(self.target_action, dtype=np.int64).reshape(-1)
        self.target_value = np.asarray(self.target_value, dtype=float).reshape(-1)
        n = len(self.inputs)
        if n < 1 or len(self.target_action) != n or len(self.target_value) != n:
            raise ParameterError("batch rows are inconsistent or empty")


def _act(net: DenseNetwork, z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0) if net.activation == "relu" else np.tanh(z)


def _act_grad(net: DenseNetwork, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    return (z > 0).astype(float) if net.activation == "relu" else 1.0 - a * a


def _dropout_masks(net: DenseNetwork, rows: int, rng: np.random.Generator) -> list:
    keep = 1.0 - net.dropout_rate
    return [
        (rng.random((rows, n)) < keep) / keep
        for n in net.layer_sizes[1:-1]
    ]


def _forward(net: DenseNetwork, x: np.ndarray, masks=None):
    """Returns outputs plus a per-layer cache of (layer input, pre-activation,
    activation before dropout)."""
    if x.shape[-1] != net.input_dim:
        raise ParameterError(f"input has {x.shape[-1]} features, network expects {net.input_dim}")
    cache = []
    h = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w + b
        if i == last:
            cache.append((h, z, None))
            return z, cache
        a = _act(net, z)
        cache.append((h, z, a))
        h = a * masks[i] if masks is not None else a


def forward(net: DenseNetwork, x, mode: str = "eval", rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Q-values for one input vector or a ``(rows, input_dim)`` batch.

    ``train`` mode applies inverted dropout to hidden units, so ``eval`` needs
    no rescaling.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x2 = x[None, :] if single else x
    masks = None
    if mode == "train" and net.dropout_rate > 0:
        if rng is None:
            raise ParameterError("train mode with dropout needs a random generator")
        masks = _dropout_masks(net, len(x2), rng)
    elif mode not in ("train", "eval"):
        raise ParameterError(f"unknown mode {mode!r}")
    out, _ = _forward(net, x2, masks)
    return out[0] if single else out


def mse_grad(net: DenseNetwork, batch: Batch, rng: Optional[np.random.Generator] = None):
    """Mean squared error on the taken action's output and its exact gradient.

    Dropout is applied only when ``rng`` is given. Gradients are returned in
    the order of :meth:`DenseNetwork.params`.
    """
    masks = None
    if rng is not None and net.dropout_rate > 0:
        masks = _dropout_masks(net, len(batch.inputs), rng)
    out, cache = _forward(net, batch.inputs, masks)
    n = len(batch.inputs)
    rows = np.arange(n)
    resid = out[rows, batch.target_action] - batch.target_value
    loss = float(np.mean(resid**2))
    delta = np.zeros_like(out)
    delta[rows, batch.target_action] = 2.0 * resid / n
    grads = []
    for i in range(len(net.weights) - 1, -1, -1):
        h_in, z, _ = cache[i]
        grads.append(delta.sum(axis=0))
        grads.append(h_in.T @ delta)
        if i == 0:
            break
        _, z_prev, a_prev = cache[i - 1]
        back = delta @ net.weights[i].T
        if masks is not None:
            back = back * masks[i - 1]
        delta = back * _act_grad(net, z_prev, a_prev)
    grads.reverse()
    return loss, grads


@dataclass
class AdamState:
    first_moment: list
    second_moment: list
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray], **hyper) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **hyper)


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState, lr: float):
    """Bias-corrected Adam update, in place on ``params`` and ``state``."""
    if not lr > 0:
        raise ParameterError("learning rate must be > 0")
    if len(params) != len(grads) or any(p.shape != g.shape for p, g in zip(params, grads)):
        raise ParameterError("parameter and gradient shapes differ")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    c1, c2 = 1.0 - b1**t, 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps_hat)
    return params, state


def _relu_pattern(net: DenseNetwork, x: np.ndarray) -> list:
    _, cache = _forward(net, x)
    return [z > 0 for _, z, a in cache if a is not None]


def finite_diff_check(
    net: DenseNetwork,
    batch: Batch,
    h: float = 1e-5,
    rng: Optional[np.random.Generator] = None,
    max_params: int = 2000,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    For relu nets, parameters whose +-h perturbation flips any unit across the
    kink are skipped. Nets larger than ``max_params`` are checked on a random
    subset of ``max(200, max_params // 4)`` parameters.
    """
    if net.dropout_rate != 0:
        raise ParameterError("disable dropout before checking gradients")
    if not 1e-6 <= h <= 1e-3:
        raise ParameterError("h must lie in [1e-6, 1e-3]")
    _, grads = mse_grad(net, batch)
    params = net.params()
    index = [(k, j) for k, p in enumerate(params) for j in range(p.size)]
    if len(index) > max_params:
        rng = rng or np.random.default_rng(0)
        pick = rng.choice(len(index), size=max(200, max_params // 4), replace=False)
        index = [index[i] for i in sorted(pick)]
    base_pattern = _relu_pattern(net, batch.inputs) if net.activation == "relu" else None
    worst = 0.0
    for k, j in index:
        flat = params[k].reshape(-1)
        orig = flat[j]
        flat[j] = orig + h
        up, _ = mse_grad(net, batch)
        pat_up = _relu_pattern(net, batch.inputs) if base_pattern else None
        flat[j] = orig - h
        down, _ = mse_grad(net, batch)
        pat_down = _relu_pattern(net, batch.inputs) if base_pattern else None
        flat[j] = orig
        if base_pattern is not None and not all(
            np.array_equal(a, b) and np.array_equal(a, c) for a, b, c in zip(base_pattern, pat_up, pat_down)
        ):
            continue
        numeric = (up - down) / (2 * h)
        analytic = grads[k].reshape(-1)[j]
        denom = max(abs(numeric), abs(analytic), 1e-7)
        worst = max(worst, abs(numeric - analytic) / denom)
    return worst


def average_parameters(a: DenseNetwork, b: DenseNetwork) -> DenseNetwork:
    if not a.same_shape(b):
        raise ParameterError(f"shape mismatch {a.layer_sizes} vs {b.layer_sizes}")
    out = a.copy()
    out.load_params([(pa + pb) / 2.0 for pa, pb in zip(a.params(), b.params())])
    return out


def network_to_bytes(net: DenseNetwork) -> bytes:
    """Versioned binary: magic, version, JSON header, then float64 LE arrays."""
    header = json.dumps(
        {"layer_sizes": net.layer_sizes, "activation": net.activation, "dropout_rate": net.dropout_rate},
        sort_keys=True,
    ).encode()
    parts = [MAGIC, struct.pack("<BI", FORMAT_VERSION, len(header)), header]
    parts += [np.ascontiguousarray(p, dtype="<f8").tobytes() for p in net.params()]
    return b"".join(parts)


def network_from_bytes(payload: bytes) -> DenseNetwork:
    if not payload.startswith(MAGIC):
        raise ParameterError("not a network parameter file")
    offset = len(MAGIC)
    version, n = struct.unpack_from("<BI", payload, offset)
    if version != FORMAT_VERSION:
        raise ParameterError(f"unsupported network file version {version}")
    offset += struct.calcsize("<BI")
    meta = json.loads(payload[offset : offset + n])
    offset += n
    sizes = meta["layer_sizes"]
    weights, biases = [], []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        w = np.frombuffer(payload, "<f8", n_in * n_out, offset).reshape(n_in, n_out).astype(float)
        offset += w.nbytes
        b = np.frombuffer(payload, "<f8", n_out, offset).astype(float)
        offset += b.nbytes
        weights.append(w)
        biases.append(b)
    if offset != len(payload):
        raise ParameterError("trailing bytes in network file")
    return DenseNetwork(sizes, weights, biases, meta["activation"], meta["dropout_rate"])


def save_network(net: DenseNetwork, path) -> None:
    Path(path).write_bytes(network_to_bytes(net))


def load_network(path) -> DenseNetwork:
    return network_from_bytes(Path(path).read_bytes())
