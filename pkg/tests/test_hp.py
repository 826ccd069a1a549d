import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from gencfl.hp import HpBounds, HyperParams, clamp, distance, lr_distance, sample

B = HpBounds()

hps = st.builds(
    HyperParams,
    st.floats(B.lr_min, B.lr_max),
    st.integers(B.bs_min, B.bs_max),
)


def test_distance_identity():
    assert distance(HyperParams(1e-3, 32), HyperParams(1e-3, 32)) == 0.0


@pytest.mark.parametrize("a, b, expected", [
    (HyperParams(1e-3, 32), HyperParams(1e-4, 64), math.sqrt(2)),
    (HyperParams(1e-2, 16), HyperParams(1e-5, 128), math.sqrt(18)),
])
def test_distance_hand_substituted(a, b, expected):
    assert abs(distance(a, b) - expected) < 1e-12


def test_lr_only_distance_ignores_batch_size():
    assert lr_distance(HyperParams(1e-3, 16), HyperParams(1e-5, 128)) == pytest.approx(2.0)


@pytest.mark.parametrize("bad", [HyperParams(0.0, 32), HyperParams(-1e-3, 32), HyperParams(1e-3, 0)])
def test_distance_rejects_non_positive(bad):
    with pytest.raises(ValueError):
        distance(bad, HyperParams(1e-3, 32))


@settings(max_examples=300)
@given(hps, hps, hps)
def test_distance_is_a_metric(a, b, c):
    assert distance(a, b) == distance(b, a)
    assert distance(a, a) == 0.0
    assert distance(a, c) <= distance(a, b) + distance(b, c) + 1e-12
    if a != b:
        assert distance(a, b) > 0


def test_clamp_examples():
    assert clamp(HyperParams(2e-1, 32), B) == HyperParams(1e-1, 32)
    assert clamp(HyperParams(1e-3, 12.4), B) == HyperParams(1e-3, 16)
    assert clamp(HyperParams(1e-3, 48), B) == HyperParams(1e-3, 48)
    assert clamp(HyperParams(1e-3, 52.5), B) == HyperParams(1e-3, 53)


@given(st.floats(1e-12, 10.0), st.floats(0.1, 1000.0))
def test_clamp_is_idempotent_and_in_bounds(lr, bs):
    once = clamp(HyperParams(lr, bs), B)
    assert clamp(once, B) == once
    assert B.contains(once)


def test_bounds_validation():
    with pytest.raises(ValueError):
        HpBounds(lr_min=1e-1, lr_max=1e-2)
    with pytest.raises(ValueError):
        HpBounds(bs_min=64, bs_max=32)


def test_samples_stay_in_bounds_and_use_powers_of_two():
    rng = np.random.default_rng(0)
    draws = [sample(B, rng) for _ in range(10000)]
    assert all(B.contains(h) for h in draws)
    assert {h.batch_size for h in draws} == {16, 32, 64, 128}


def test_sample_is_deterministic_per_seed():
    assert sample(B, 42) == sample(B, 42)
    assert sample(B, 42) != sample(B, 43)


def test_sampled_log_lr_is_uniform():
    rng = np.random.default_rng(1)
    logs = np.array([math.log10(sample(B, rng).lr) for _ in range(10000)])
    lo, hi = math.log10(B.lr_min), math.log10(B.lr_max)
    assert stats.kstest(logs, stats.uniform(lo, hi - lo).cdf).pvalue > 0.01
