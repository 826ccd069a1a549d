"""Per-cluster evolution of hyper-parameter populations.

One generation: sort by last-round loss, keep the best ``elite_count`` members
as they are, and fill every other slot with the mean of two random parents
perturbed by a factor in {0.9, 1.0, 1.1} per coordinate.

``rng`` only needs an ``integers(low, high, size)`` method, so tests can pass
a stub with scripted draws in place of ``numpy.random.Generator``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .hp import HpBounds, HyperParams, clamp

DEFAULT_ELITE = 2


@dataclass(frozen=True)
class Population:
    members: tuple[HyperParams, ...]
    # empty until the members have been trained for a round
    losses: tuple[float, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        object.__setattr__(self, "losses", tuple(float(v) for v in self.losses))
        if not self.members:
            raise ValueError("a population needs at least one member")
        if self.losses and len(self.losses) != len(self.members):
            raise ValueError(
                f"{len(self.members)} members but {len(self.losses)} losses")

    def __len__(self) -> int:
        return len(self.members)


def mutate(hp: HyperParams, rng, bounds: HpBounds = HpBounds()) -> HyperParams:
    """Scale each coordinate by (1 + f/10), f drawn from {-1, 0, 1}, then clamp."""
    f_lr, f_bs = (int(v) for v in rng.integers(-1, 2, size=2))
    lr = hp.lr + hp.lr * f_lr / 10
    bs = hp.batch_size + hp.batch_size * f_bs / 10
    return clamp(HyperParams(lr, bs), bounds)


def crossover(members, elite_count: int, rng, bounds: HpBounds = HpBounds()) -> list[HyperParams]:
    """Elites copied through; the rest are mutated means of random parent pairs.

    ``members`` must already be sorted best-first. Parents are drawn with
    replacement from the whole population.
    """
    members = list(members.members if isinstance(members, Population) else members)
    if elite_count < 1:
        raise ValueError("elite_count must be at least 1")
    n = len(members)
    out = members[:min(elite_count, n)]
    for _ in range(len(out), n):
        a, b = (int(v) for v in rng.integers(0, n, size=2))
        pa, pb = members[a], members[b]
        mean = HyperParams((pa.lr + pb.lr) / 2, (pa.batch_size + pb.batch_size) / 2)
        out.append(mutate(mean, rng, bounds))
    return out


def sort_order(losses) -> list[int]:
    return sorted(range(len(losses)), key=lambda i: (losses[i], i))


def evolve(pop: Population, elite_count: int, rng, bounds: HpBounds = HpBounds(),
           mutate_singleton: bool = False) -> Population:
    """One generation. The result is in rank order with its losses cleared.

    A population without losses keeps its current order. With
    ``mutate_singleton`` a one-member population is mutated instead of being
    passed through unchanged.
    """
    order = sort_order(pop.losses) if pop.losses else list(range(len(pop)))
    ranked = [pop.members[i] for i in order]
    if len(ranked) == 1 and mutate_singleton:
        return Population((mutate(ranked[0], rng, bounds),))
    return Population(tuple(crossover(ranked, elite_count, rng, bounds)))


def default_elite(size: int) -> int:
    return min(DEFAULT_ELITE, size)

