"""Hyper-parameter distance and DBSCAN clustering of a client population.

Clients are points (learning rate, batch size). Distance is measured in
decades of learning rate and octaves of batch size, so 1e-3/32 and 1e-4/64
sit sqrt(2) apart. This script builds three loose groups of clients, shows
how the cluster count responds to epsilon and min_pts, and then shows noise
points being promoted to singleton clusters.

    python demos/01_hp_distance_and_dbscan.py
"""

import numpy as np

from gencfl.clustering import DbscanParams, dbscan, sweep
from gencfl.hp import HyperParams, distance

print("distance((1e-3, 32), (1e-4, 64))  =", distance(HyperParams(1e-3, 32), HyperParams(1e-4, 64)))
print("distance((1e-2, 16), (1e-5, 128)) =", distance(HyperParams(1e-2, 16), HyperParams(1e-5, 128)))

rng = np.random.default_rng(0)
centres = [(1e-4, 16), (3e-3, 32), (5e-2, 128)]
clients = [HyperParams(lr * 10 ** rng.normal(scale=0.12), bs) for lr, bs in centres for _ in range(4)]
clients.append(HyperParams(1e-6, 64))  # a loner far from everyone

print("\nepsilon  min_pts  dense clusters  after noise promotion")
for row in sweep(clients, [1.0, 0.2, 0.1, 0.05], [1, 2]):
    print(f"{row.epsilon:7.3f}  {row.min_pts:7d}  {row.clusters_raw:14d}  {row.clusters_promoted:21d}")

a = dbscan(clients, DbscanParams(epsilon=0.2, min_pts=2))
print(f"\nepsilon=0.2, min_pts=2: {a.n_raw_clusters} dense clusters, {a.n_noise} noise point(s)")
for cid, members in enumerate(a.members()):
    print(f"  cluster {cid}: " + ", ".join(f"({clients[i].lr:.1e}, {clients[i].batch_size})"
                                          for i in members))
