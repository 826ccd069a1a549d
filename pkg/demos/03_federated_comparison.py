"""Clustered genetic federation against plain federated averaging on MNIST.

Uses the bundled 5,000-image MNIST sample and the desk-scale config: 100
clients in the pool, 10 of them active, 10 rounds. Both arms start from the
same pre-trained server and the same client shards. Takes a few seconds.

    python demos/03_federated_comparison.py [seed]
"""

import sys
from pathlib import Path

from gencfl.config import load_config
from gencfl.engine import load_datasets, run_experiment

cfg = load_config(Path(__file__).resolve().parents[1] / "configs" / "mnist_desk.yaml")
if len(sys.argv) > 1:
    cfg.seed = int(sys.argv[1])
train, test = load_datasets(cfg)

runs = {mode: run_experiment(cfg, mode, train, test) for mode in cfg.modes}

g = runs["genetic_cfl"]
print(f"broadcast round grouped {len(g.clients)} clients into {g.assignment.n_clusters} clusters")
for rec in g.broadcast.per_cluster:
    hps = ", ".join(f"({h.lr:.1e}, {h.batch_size})" for h in rec.members)
    print(f"  cluster {rec.cluster_id}: {hps}")

print("\nround   genetic_cfl   generic_fl")
for mg, mf in zip(g.history, runs["generic_fl"].history):
    print(f"{mg.round:5d}   {mg.server_accuracy:11.4f}   {mf.server_accuracy:10.4f}")
