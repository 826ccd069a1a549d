"""A small dense ReLU network with softmax cross-entropy, trained by plain SGD.

Everything is float64 and every function is pure: weights go in, new weights
come out, and all randomness flows from an explicit integer seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

# a batch loss above this (or non-finite) aborts local training
LOSS_CAP = 1e3


class DivergenceError(RuntimeError):
    """Raised when a model produces non-finite values outside local training."""


@dataclass(frozen=True)
class ModelArch:
    layer_sizes: tuple[int, ...]
    activation: str = "relu"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2:
            raise ValueError("an architecture needs at least input and output sizes")
        if any(s < 1 for s in sizes):
            raise ValueError(f"layer sizes must be positive, got {list(sizes)}")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")

    @property
    def classes(self) -> int:
        return self.layer_sizes[-1]


class ModelWeights:
    """Ordered (weight matrix, bias vector) pairs, one per layer transition."""

    __slots__ = ("layers",)

    def __init__(self, layers, arch: ModelArch | None = None):
        layers = tuple((np.asarray(w, dtype=np.float64), np.asarray(b, dtype=np.float64))
                       for w, b in layers)
        if not layers:
            raise ValueError("a model needs at least one layer")
        for i, (w, b) in enumerate(layers):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {i}: weight {w.shape} and bias {b.shape} disagree")
            if i and layers[i - 1][0].shape[1] != w.shape[0]:
                raise ValueError(f"layer {i}: input dim {w.shape[0]} does not chain")
        self.layers = layers
        if arch is not None and self.layer_sizes != arch.layer_sizes:
            raise ValueError(f"shapes {self.layer_sizes} do not match {arch.layer_sizes}")

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.layers[0][0].shape[0],) + tuple(w.shape[1] for w, _ in self.layers)

    def arrays(self) -> list[np.ndarray]:
        return [a for pair in self.layers for a in pair]

    def copy(self) -> "ModelWeights":
        return ModelWeights([(w.copy(), b.copy()) for w, b in self.layers])

    def is_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())

    def same_shape(self, other: "ModelWeights") -> bool:
        return [a.shape for a in self.arrays()] == [a.shape for a in other.arrays()]

    def __eq__(self, other):
        if not isinstance(other, ModelWeights) or not self.same_shape(other):
            return NotImplemented if not isinstance(other, ModelWeights) else False
        return all(np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays()))

    def __repr__(self):
        return f"ModelWeights(layer_sizes={list(self.layer_sizes)})"


@dataclass(frozen=True)
class TrainReport:
    final_loss: float
    epochs_run: int
    samples_seen: int
    diverged: bool = False


def init_weights(arch: ModelArch, seed: int) -> ModelWeights:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out in zip(arch.layer_sizes[:-1], arch.layer_sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        layers.append((rng.uniform(-limit, limit, size=(fan_in, fan_out)), np.zeros(fan_out)))
    return ModelWeights(layers)


def _forward(w: ModelWeights, x: np.ndarray) -> list[np.ndarray]:
    acts = [x]
    for i, (wm, b) in enumerate(w.layers):
        z = acts[-1] @ wm + b
        acts.append(z if i == len(w.layers) - 1 else np.maximum(z, 0.0))
    return acts


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def logits(w: ModelWeights, x: np.ndarray) -> np.ndarray:
    return _forward(w, np.asarray(x, dtype=np.float64))[-1]


def predict_proba(w: ModelWeights, x: np.ndarray) -> np.ndarray:
    return np.exp(_log_softmax(logits(w, x)))


def loss_and_grad(w: ModelWeights, x: np.ndarray, y: np.ndarray) -> tuple[float, list]:
    """Mean cross-entropy over the batch and its gradient per (W, b) pair."""
    acts = _forward(w, x)
    logp = _log_softmax(acts[-1])
    n = len(y)
    loss = -logp[np.arange(n), y].mean()

    delta = np.exp(logp)
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads = [None] * len(w.layers)
    for i in range(len(w.layers) - 1, -1, -1):
        grads[i] = (acts[i].T @ delta, delta.sum(axis=0))
        if i:
            delta = (delta @ w.layers[i][0].T) * (acts[i] > 0)
    return float(loss), grads


def train(w: ModelWeights, x: np.ndarray, y: np.ndarray, hp, epochs: int = 1,
          seed: int = 0) -> tuple[ModelWeights, TrainReport]:
    """Mini-batch SGD at ``hp.lr`` / ``hp.batch_size`` for ``epochs`` passes.

    The last partial batch of each epoch is trained. If any batch loss is
    non-finite or exceeds LOSS_CAP, training stops and the input weights are
    returned with a report of ``final_loss=LOSS_CAP`` and ``diverged=True``.
    """
    n = len(y)
    if n == 0:
        raise ValueError("cannot train on an empty shard")
    if epochs < 1:
        raise ValueError("epochs must be positive")
    lr = float(hp.lr)
    bs = int(hp.batch_size)
    if bs < 1:
        raise ValueError("batch size must be positive")

    rng = np.random.default_rng(seed)
    cur = [(wm.copy(), b.copy()) for wm, b in w.layers]
    model = ModelWeights(cur)
    seen = 0
    epoch_loss = 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(epochs):
            order = rng.permutation(n)
            total = 0.0
            for start in range(0, n, bs):
                idx = order[start:start + bs]
                loss, grads = loss_and_grad(model, x[idx], y[idx])
                if not np.isfinite(loss) or loss > LOSS_CAP:
                    return w.copy(), TrainReport(LOSS_CAP, epochs, seen, diverged=True)
                total += loss * len(idx)
                seen += len(idx)
                for (wm, b), (gw, gb) in zip(cur, grads):
                    wm -= lr * gw
                    b -= lr * gb
            epoch_loss = total / n
    if not model.is_finite():
        return w.copy(), TrainReport(LOSS_CAP, epochs, seen, diverged=True)
    return model, TrainReport(epoch_loss, epochs, seen)


def evaluate(w: ModelWeights, x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Return (accuracy, mean cross-entropy) on the given data."""
    if len(y) == 0:
        raise ValueError("cannot evaluate on empty data")
    logp = _log_softmax(logits(w, x))
    acc = float((logp.argmax(axis=1) == y).mean())
    loss = float(-logp[np.arange(len(y)), y].mean())
    return acc, loss


def check_arch(arch: ModelArch, dim: int, classes: int) -> None:
    if arch.layer_sizes[0] != dim or arch.classes != classes:
        raise ValueError(
            f"architecture {list(arch.layer_sizes)} does not fit data with "
            f"{dim} features and {classes} classes")


def as_arch(sizes: Sequence[int] | ModelArch) -> ModelArch:
    return sizes if isinstance(sizes, ModelArch) else ModelArch(tuple(sizes))
