"""Genetic clustered federated learning simulator.

Clients are grouped by their training hyper-parameters with DBSCAN and each
group's (learning rate, batch size) population evolves between rounds.
A static-hyper-parameter FedAvg baseline shares the same training path.
"""

__version__ = "0.1.0"

from .clustering import ClusterAssignment, DbscanParams, dbscan, sweep
from .config import ExperimentConfig, load_config
from .data import Dataset, load_idx, partition_non_iid
from .engine import aggregate, broadcast_round, load_datasets, run_experiment, run_rounds, setup_federation
from .genetic import Population, crossover, evolve, mutate
from .hp import HpBounds, HyperParams, clamp, distance, sample
from .nn import ModelArch, ModelWeights, evaluate, init_weights, train

__all__ = [
    "ClusterAssignment", "DbscanParams", "dbscan", "sweep",
    "ExperimentConfig", "load_config",
    "Dataset", "load_idx", "partition_non_iid",
    "aggregate", "broadcast_round", "load_datasets", "run_experiment", "run_rounds", "setup_federation",
    "Population", "crossover", "evolve", "mutate",
    "HpBounds", "HyperParams", "clamp", "distance", "sample",
    "ModelArch", "ModelWeights", "evaluate", "init_weights", "train",
]
