from pathlib import Path

import numpy as np
import pytest

from gencfl.data import Dataset

ROOT = Path(__file__).resolve().parents[1]
DESK_CONFIG = ROOT / "configs" / "mnist_desk.yaml"
MNIST5K = ROOT / "data" / "mnist5k"


class ScriptedRng:
    """Replays queued ``integers`` draws; raises if a draw falls outside [low, high)."""

    def __init__(self, draws):
        self.draws = [np.asarray(d) for d in draws]
        self.calls = []

    def integers(self, low, high, size=None):
        self.calls.append((low, high, size))
        if not self.draws:
            raise AssertionError("scripted rng ran out of draws")
        d = self.draws.pop(0)
        assert d.shape == (size,), f"expected {size} draws, scripted {d.shape}"
        assert ((low <= d) & (d < high)).all(), f"{d} outside [{low}, {high})"
        return d


class ZeroFactorRng:
    """Mutation factors are always 0; parent picks cycle through ``parents``."""

    def __init__(self, parents=((0, 1),)):
        self.parents = [np.asarray(p) for p in parents]
        self.k = 0

    def integers(self, low, high, size=None):
        if (low, high) == (-1, 2):
            return np.zeros(size, dtype=int)
        p = self.parents[self.k % len(self.parents)] % high
        self.k += 1
        return p


def blobs(n_per_class=16, classes=2, dim=3, spread=0.3, seed=0) -> Dataset:
    """Well-separated Gaussian blobs, one per class, as a Dataset."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(scale=3.0, size=(classes, dim))
    x = np.concatenate([c + spread * rng.normal(size=(n_per_class, dim)) for c in centers])
    y = np.repeat(np.arange(classes), n_per_class)
    return Dataset(x, y, classes)


@pytest.fixture(scope="session")
def mnist5k():
    from gencfl.data import load_idx

    train = load_idx(MNIST5K / "train-images-idx3-ubyte.gz", MNIST5K / "train-labels-idx1-ubyte.gz")
    test = load_idx(MNIST5K / "t10k-images-idx3-ubyte.gz", MNIST5K / "t10k-labels-idx1-ubyte.gz")
    return train, test


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
