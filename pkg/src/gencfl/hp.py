"""The (learning rate, batch size) genome and its log-scaled geometry."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class HyperParams:
    lr: float
    batch_size: int

    def as_dict(self) -> dict:
        return {"lr": self.lr, "batch_size": self.batch_size}


@dataclass(frozen=True)
class HpBounds:
    lr_min: float = 1e-7
    lr_max: float = 1e-1
    bs_min: int = 16
    bs_max: int = 128

    def __post_init__(self):
        if not 0 < self.lr_min < self.lr_max:
            raise ValueError(f"need 0 < lr_min < lr_max, got {self.lr_min}, {self.lr_max}")
        if not 1 <= self.bs_min <= self.bs_max:
            raise ValueError(f"need 1 <= bs_min <= bs_max, got {self.bs_min}, {self.bs_max}")

    def contains(self, hp: HyperParams) -> bool:
        return (self.lr_min <= hp.lr <= self.lr_max
                and self.bs_min <= hp.batch_size <= self.bs_max
                and float(hp.batch_size).is_integer())


def log_coords(hp: HyperParams) -> tuple[float, float]:
    """Coordinates in which ``distance`` is plain Euclidean."""
    return math.log10(hp.lr), math.log2(hp.batch_size)


def _check_positive(hp: HyperParams) -> None:
    if not hp.lr > 0 or not hp.batch_size > 0:
        raise ValueError(f"hyper-parameters must be positive, got {hp}")


def distance(a: HyperParams, b: HyperParams) -> float:
    """sqrt(log10(lr_a/lr_b)^2 + log2(bs_a/bs_b)^2)."""
    _check_positive(a)
    _check_positive(b)
    # differences of logs rather than logs of ratios keep d(a, b) == d(b, a) exactly
    (xa, ya), (xb, yb) = log_coords(a), log_coords(b)
    return math.hypot(xa - xb, ya - yb)


def lr_distance(a: HyperParams, b: HyperParams) -> float:
    """Learning-rate-only variant: |log10(lr_a/lr_b)|."""
    _check_positive(a)
    _check_positive(b)
    return abs(math.log10(a.lr) - math.log10(b.lr))


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def clamp(hp: HyperParams, bounds: HpBounds) -> HyperParams:
    """Clip both coordinates into bounds; batch size is rounded first."""
    lr = min(max(float(hp.lr), bounds.lr_min), bounds.lr_max)
    bs = min(max(round_half_up(hp.batch_size), bounds.bs_min), bounds.bs_max)
    return HyperParams(lr, bs)


def batch_size_choices(bounds: HpBounds) -> list[int]:
    choices = [2 ** k for k in range(0, 31) if bounds.bs_min <= 2 ** k <= bounds.bs_max]
    # bounds without an interior power of two fall back to the lower bound
    return choices or [bounds.bs_min]


def sample_lr(bounds: HpBounds, rng: np.random.Generator) -> float:
    lo, hi = math.log10(bounds.lr_min), math.log10(bounds.lr_max)
    return float(min(max(10.0 ** rng.uniform(lo, hi), bounds.lr_min), bounds.lr_max))


def sample_batch_size(bounds: HpBounds, rng: np.random.Generator) -> int:
    choices = batch_size_choices(bounds)
    return int(choices[rng.integers(len(choices))])


def sample(bounds: HpBounds, seed) -> HyperParams:
    """Log-uniform learning rate and a uniformly chosen power-of-two batch size.

    ``seed`` may be an int or an existing ``numpy.random.Generator``.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    lr = sample_lr(bounds, rng)
    return HyperParams(lr, sample_batch_size(bounds, rng))
