"""Plain-numpy multilayer perceptron.

ReLU hidden layers, affine output, softmax cross-entropy loss, reverse-mode
gradients, and heavy-ball SGD (v <- mu*v + g; w <- w - lr*v). Everything is
float64 and deterministic given the seeds involved.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import rng
from .errors import ConfigError, ParameterError

DEFAULT_DIMS = (784, 512, 256, 128, 10)


@dataclass
class MlpParams:
    """Ordered (weight, bias) pairs; weights are out_dim x in_dim."""

    layers: list[tuple[np.ndarray, np.ndarray]]

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.layers[0][0].shape[1],) + tuple(w.shape[0] for w, _ in self.layers)

    def copy(self) -> "MlpParams":
        return MlpParams([(w.copy(), b.copy()) for w, b in self.layers])

    def zeros_like(self) -> "MlpParams":
        return MlpParams([(np.zeros_like(w), np.zeros_like(b)) for w, b in self.layers])

    def all_finite(self) -> bool:
        return all(np.isfinite(w).all() and np.isfinite(b).all() for w, b in self.layers)


@dataclass
class OptimizerState:
    """Momentum buffers, congruent with the parameters they update."""

    velocity: MlpParams

    @classmethod
    def zeros(cls, params: MlpParams) -> "OptimizerState":
        return cls(velocity=params.zeros_like())

    def copy(self) -> "OptimizerState":
        return OptimizerState(velocity=self.velocity.copy())


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.5
    local_epochs: int = 100
    batch_size: int = 32
    seed: int = 0
    dims: tuple[int, ...] = DEFAULT_DIMS

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if not (0.0 <= self.momentum < 1.0):
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.local_epochs < 0:
            raise ConfigError(f"local_epochs must be nonnegative, got {self.local_epochs}")
        if self.batch_size <= 0:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")
        self.dims = tuple(int(d) for d in self.dims)
        if len(self.dims) < 2 or any(d <= 0 for d in self.dims):
            raise ConfigError(f"dims must chain at least input->output, got {self.dims}")


@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray            # class_count x class_count, true x predicted
    per_class_accuracy: np.ndarray   # diagonal / row sum, 0 for empty rows


def init_mlp(dims: Sequence[int], seed: int | np.random.Generator) -> MlpParams:
    """Uniform Glorot weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.

    seed may also be an already-derived generator (used by the experiment
    engine for its per-node streams).
    """
    dims = tuple(int(d) for d in dims)
    if len(dims) < 2 or any(d <= 0 for d in dims):
        raise ParameterError(f"dims must list at least input and output sizes, got {dims}")
    gen = seed if isinstance(seed, np.random.Generator) else rng.substream(seed, rng.INIT)
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w = gen.uniform(-bound, bound, size=(fan_out, fan_in))
        layers.append((w, np.zeros(fan_out)))
    return MlpParams(layers)


def forward(params: MlpParams, batch: np.ndarray) -> np.ndarray:
    """Logits for a batch (batch x in_dim): ReLU hidden layers, affine output."""
    x = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if x.shape[1] != params.dims[0]:
        raise ParameterError(
            f"input dim {x.shape[1]} does not match first layer dim {params.dims[0]}")
    for w, b in params.layers[:-1]:
        x = np.maximum(x @ w.T + b, 0.0)
    w, b = params.layers[-1]
    return x @ w.T + b


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grads(params: MlpParams, batch: np.ndarray,
                   labels: np.ndarray) -> tuple[float, MlpParams]:
    """Mean softmax cross-entropy and its gradients by backpropagation."""
    x = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    y = np.asarray(labels, dtype=np.int64)
    if x.shape[0] == 0:
        raise ParameterError("batch must be nonempty")
    if y.min() < 0 or y.max() >= params.dims[-1]:
        raise ParameterError(f"labels must lie in 0..{params.dims[-1] - 1}")

    activations = [x]
    pre = []
    h = x
    for w, b in params.layers[:-1]:
        z = h @ w.T + b
        pre.append(z)
        h = np.maximum(z, 0.0)
        activations.append(h)
    w, b = params.layers[-1]
    logits = h @ w.T + b

    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    n = x.shape[0]
    loss = float(-log_probs[np.arange(n), y].mean())

    dlogits = np.exp(log_probs)
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n

    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(params.layers)
    delta = dlogits
    for li in range(len(params.layers) - 1, -1, -1):
        w, _ = params.layers[li]
        grads[li] = (delta.T @ activations[li], delta.sum(axis=0))
        if li > 0:
            delta = (delta @ w) * (pre[li - 1] > 0.0)
    return loss, MlpParams(grads)


def sgd_momentum_step(params: MlpParams, state: OptimizerState, grads: MlpParams,
                      lr: float, mu: float) -> tuple[MlpParams, OptimizerState]:
    """Heavy-ball update, gradient-accumulating convention. Updates arrays
    in place and returns the same objects."""
    for (w, b), (vw, vb), (gw, gb) in zip(params.layers, state.velocity.layers,
                                          grads.layers):
        vw *= mu
        vw += gw
        vb *= mu
        vb += gb
        w -= lr * vw
        b -= lr * vb
    return params, state


def train_local(params: MlpParams, state: OptimizerState, features: np.ndarray,
                labels: np.ndarray, cfg: TrainConfig,
                gen: np.random.Generator | None = None) -> tuple[MlpParams, OptimizerState]:
    """Run cfg.local_epochs full passes of mini-batch SGD on one node's data.

    Sample order is reshuffled every epoch from the supplied stream (or one
    derived from cfg.seed); the last batch of an epoch may be short.
    """
    n = len(labels)
    if n == 0:
        raise ConfigError("local dataset is empty")
    if gen is None:
        gen = rng.substream(cfg.seed, rng.TRAIN)
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    for _ in range(cfg.local_epochs):
        order = gen.permutation(n)
        for start in range(0, n, cfg.batch_size):
            sel = order[start:start + cfg.batch_size]
            _, grads = loss_and_grads(params, x[sel], y[sel])
            sgd_momentum_step(params, state, grads, cfg.learning_rate, cfg.momentum)
    return params, state


def evaluate(params: MlpParams, features: np.ndarray, labels: np.ndarray,
             class_filter: Sequence[int] | None = None,
             class_count: int = 10) -> EvalResult:
    """Argmax accuracy plus full confusion counts over the (filtered) set."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if class_filter is not None:
        keep = np.isin(y, np.asarray(sorted(class_filter), dtype=np.int64))
        x, y = x[keep], y[keep]
    if len(y) == 0:
        raise ConfigError("evaluation set is empty after class filtering")
    preds = np.empty(len(y), dtype=np.int64)
    for start in range(0, len(y), 4096):
        preds[start:start + 4096] = forward(params, x[start:start + 4096]).argmax(axis=1)
    confusion = np.zeros((class_count, class_count), dtype=np.int64)
    np.add.at(confusion, (y, preds), 1)
    row_sums = confusion.sum(axis=1)
    per_class = np.divide(np.diag(confusion), row_sums,
                          out=np.zeros(class_count), where=row_sums > 0)
    return EvalResult(
        accuracy=float((preds == y).mean()),
        confusion=confusion,
        per_class_accuracy=per_class,
    )


# ------------------------------------------------------------- checkpointing


def save_params(params: MlpParams, path) -> None:
    """One-line JSON header with layer shapes, then flat little-endian f64."""
    header = {"layers": [[list(w.shape), list(b.shape)] for w, b in params.layers]}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for w, b in params.layers:
            fh.write(w.astype("<f8").tobytes())
            fh.write(b.astype("<f8").tobytes())


def load_params(path) -> MlpParams:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        flat = np.frombuffer(fh.read(), dtype="<f8")
    layers = []
    pos = 0
    for w_shape, b_shape in header["layers"]:
        w_size = int(np.prod(w_shape))
        b_size = int(np.prod(b_shape))
        w = flat[pos:pos + w_size].reshape(w_shape).copy()
        pos += w_size
        b = flat[pos:pos + b_size].reshape(b_shape).copy()
        pos += b_size
        layers.append((w, b))
    return MlpParams(layers)
