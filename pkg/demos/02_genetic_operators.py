"""One cluster's hyper-parameters evolving over a few generations.

Each generation ranks members by their last loss, copies the best two through
unchanged, and replaces the rest with the mean of two random parents nudged
by -10 %, 0 or +10 % per coordinate. The "loss" here is a made-up bowl around
lr=1e-2, batch size 32, standing in for a round of local training.

    python demos/02_genetic_operators.py
"""

import math

import numpy as np

from gencfl.genetic import Population, evolve
from gencfl.hp import HpBounds, HyperParams, sample

bounds = HpBounds()
rng = np.random.default_rng(1)


def toy_loss(hp: HyperParams) -> float:
    return (math.log10(hp.lr) + 2) ** 2 + 0.1 * (math.log2(hp.batch_size) - 5) ** 2


members = tuple(sample(bounds, rng) for _ in range(6))
for gen in range(8):
    losses = tuple(toy_loss(m) for m in members)
    best = min(range(len(members)), key=losses.__getitem__)
    print(f"gen {gen}: best ({members[best].lr:.2e}, {members[best].batch_size:3d}) "
          f"loss {losses[best]:.3f}   mean loss {np.mean(losses):.3f}")
    members = evolve(Population(members, losses), elite_count=2, rng=rng, bounds=bounds).members
