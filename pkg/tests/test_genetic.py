import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gencfl.genetic import Population, crossover, evolve, mutate, sort_order
from gencfl.hp import HpBounds, HyperParams

from conftest import ScriptedRng, ZeroFactorRng

B = HpBounds()

hps = st.builds(HyperParams, st.floats(B.lr_min, B.lr_max), st.integers(B.bs_min, B.bs_max))


@pytest.mark.parametrize("factors, expected_lr", [((1, 0), 1.1e-3), ((-1, 0), 0.9e-3), ((0, 0), 1e-3)])
def test_mutate_examples(factors, expected_lr):
    out = mutate(HyperParams(1e-3, 32), ScriptedRng([factors]), B)
    assert out.lr == pytest.approx(expected_lr, rel=1e-15)
    assert out.batch_size == 32


def test_mutate_batch_size_rounds_and_clamps():
    assert mutate(HyperParams(1e-3, 48), ScriptedRng([(0, -1)]), B).batch_size == 43   # 43.2
    assert mutate(HyperParams(1e-3, 128), ScriptedRng([(0, 1)]), B).batch_size == 128  # 140.8
    assert mutate(HyperParams(1e-1, 16), ScriptedRng([(1, -1)]), B) == HyperParams(1e-1, 16)


def test_all_elite_crossover_is_identity():
    members = [HyperParams(1e-3, 32), HyperParams(1e-4, 64)]
    assert crossover(members, 2, ScriptedRng([]), B) == members


def test_child_is_mean_of_parents_without_mutation():
    members = [HyperParams(1e-3, 32), HyperParams(1e-4, 64), HyperParams(1e-2, 16)]
    out = crossover(members, 2, ZeroFactorRng([(0, 1)]), B)
    assert out[:2] == members[:2]
    assert out[2].lr == pytest.approx(5.5e-4, rel=1e-15)
    assert out[2].batch_size == 48


def test_thousand_unlucky_children_stay_in_bounds():
    rng = np.random.default_rng(0)
    edge = [HyperParams(B.lr_max, B.bs_max), HyperParams(B.lr_min, B.bs_min),
            HyperParams(B.lr_max, B.bs_min), HyperParams(B.lr_min, B.bs_max)]
    for _ in range(1000):
        for child in crossover(edge, 1, rng, B):
            assert B.contains(child)


def test_evolve_orders_by_loss():
    a, b, c = HyperParams(1e-3, 32), HyperParams(1e-4, 64), HyperParams(1e-2, 16)
    out = evolve(Population((a, b, c), (0.3, 0.1, 0.2)), 3, ScriptedRng([]), B)
    assert out.members == (b, c, a)
    assert out.losses == ()


def test_sort_order_ties_keep_index_order():
    assert sort_order([0.2, 0.1, 0.2, 0.1]) == [1, 3, 0, 2]


def test_singleton_passes_through_unless_asked():
    solo = Population((HyperParams(1e-3, 32),), (0.5,))
    assert evolve(solo, 1, ScriptedRng([]), B).members == solo.members
    out = evolve(solo, 1, ScriptedRng([(1, 1)]), B, mutate_singleton=True)
    assert out.members[0].lr == pytest.approx(1.1e-3)
    assert out.members[0].batch_size == 35  # 35.2


def test_population_without_losses_keeps_order():
    members = (HyperParams(1e-3, 32), HyperParams(1e-4, 64))
    assert evolve(Population(members), 2, ScriptedRng([]), B).members == members


def test_population_validation():
    with pytest.raises(ValueError):
        Population(())
    with pytest.raises(ValueError):
        Population((HyperParams(1e-3, 32),), (0.1, 0.2))
    with pytest.raises(ValueError):
        crossover([HyperParams(1e-3, 32)], 0, ScriptedRng([]), B)


def golden_trace():
    """Four members, elite 2, two scripted children. Returns (expected, actual)."""
    a = HyperParams(1e-3, 32)
    b = HyperParams(1e-4, 64)
    c = HyperParams(1e-2, 16)
    d = HyperParams(1e-5, 128)
    pop = Population((a, b, c, d), (0.3, 0.1, 0.5, 0.2))
    # ranked: b, d, a, c
    rng = ScriptedRng([(0, 2), (1, -1), (1, 3), (0, 1)])
    out = evolve(pop, 2, rng, B)
    expected = [b, d, HyperParams(6.05e-4, 43), HyperParams(5.005e-3, 79)]
    return expected, list(out.members)


def two_member_trace():
    """Two generations of a two-member cluster, elite 1, factors stubbed to 0."""
    a, b = HyperParams(1e-3, 32), HyperParams(1e-4, 64)
    rng = ZeroFactorRng([(0, 1)])
    gen1 = evolve(Population((a, b), (0.2, 0.1)), 1, rng, B)
    # the child scores better than the elite next round
    gen2 = evolve(Population(gen1.members, (0.3, 0.1)), 1, rng, B)
    expected = [[b, HyperParams(5.5e-4, 48)], [HyperParams(5.5e-4, 48), HyperParams(3.25e-4, 56)]]
    return expected, [list(gen1.members), list(gen2.members)]


def _same_genomes(expected, actual):
    return (len(expected) == len(actual)
            and all(e.batch_size == a.batch_size and abs(e.lr - a.lr) <= 1e-15 * e.lr
                    for e, a in zip(expected, actual)))


def test_two_member_golden_trace():
    expected, actual = two_member_trace()
    assert all(_same_genomes(e, a) for e, a in zip(expected, actual))


def test_golden_trace():
    expected, actual = golden_trace()
    assert [m.batch_size for m in actual] == [m.batch_size for m in expected]
    for got, want in zip(actual, expected):
        assert got.lr == pytest.approx(want.lr, rel=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.lists(hps, min_size=1, max_size=12), st.integers(1, 4), st.integers(0, 2**32 - 1),
       st.data())
def test_evolve_invariants(members, elite, seed, data):
    losses = data.draw(st.lists(st.floats(0, 10), min_size=len(members), max_size=len(members)))
    pop = Population(tuple(members), tuple(losses))
    out = evolve(pop, elite, np.random.default_rng(seed), B)
    assert len(out) == len(pop)
    assert all(B.contains(m) for m in out.members)
    ranked = [members[i] for i in sort_order(losses)]
    k = min(elite, len(members))
    assert list(out.members[:k]) == ranked[:k]
