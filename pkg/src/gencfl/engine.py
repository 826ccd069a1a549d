"""Federated simulation: broadcast probe round, clustering, and training rounds.

Both modes run the same setup and the same train/aggregate path. They differ
only in how client hyper-parameters are chosen:

* ``genetic_cfl`` probes ``k_candidates`` learning rates per client in the
  broadcast round, clusters the winners with DBSCAN, and evolves each
  cluster's population before every later round.
* ``generic_fl`` probes a single learning rate (the broadcast round is plain
  local training plus averaging) and never changes it.

Every random draw comes from a generator keyed on (seed, purpose, round,
client), so results do not depend on how many worker threads train clients.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import nn
from .clustering import ClusterAssignment, dbscan
from .config import ExperimentConfig
from .data import Dataset, ShardPlan, partition_non_iid, split_server_subset
from .genetic import Population, evolve
from .hp import HyperParams, distance, lr_distance, sample, sample_lr

log = logging.getLogger(__name__)

THREADS_ENV = "GENCFL_THREADS"

# stream tags for derived seeds
_SERVER_SPLIT, _SHARDS, _ACTIVE, _INIT, _PRETRAIN, _HP, _PROBE, _TRAIN, _EVOLVE = range(9)


def derive_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1, np.uint64)[0])


def resolve_threads(value=None) -> int:
    """Worker count from an explicit value or GENCFL_THREADS; 0 means one per CPU."""
    if value is None:
        raw = os.environ.get(THREADS_ENV, "0").strip() or "0"
        try:
            value = int(raw)
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if value < 0:
        raise ValueError("thread count must be non-negative")
    return value or (os.cpu_count() or 1)


@dataclass
class ClientState:
    index: int                      # position in the full client pool
    shard: np.ndarray
    hp: HyperParams
    last_loss: Optional[float] = None
    cluster_id: Optional[int] = None


@dataclass(frozen=True)
class ClusterRecord:
    cluster_id: int
    clients: tuple[int, ...]
    members: tuple[HyperParams, ...]
    losses: tuple[float, ...]


@dataclass(frozen=True)
class RoundMetrics:
    round: int
    server_accuracy: float
    server_loss: float
    per_cluster: tuple[ClusterRecord, ...]


@dataclass
class Federation:
    """Mutable simulation state shared by the broadcast round and later rounds."""
    config: ExperimentConfig
    mode: str
    train: Dataset
    test: Dataset
    server: nn.ModelWeights
    clients: list[ClientState]
    plan: ShardPlan
    assignment: Optional[ClusterAssignment] = None
    rounds_done: int = 0
    broadcast: Optional[RoundMetrics] = None
    history: list[RoundMetrics] = field(default_factory=list)

    @property
    def seed(self) -> int:
        return self.config.seed


def aggregate(models: Sequence[nn.ModelWeights]) -> nn.ModelWeights:
    """Unweighted elementwise mean of client models."""
    models = list(models)
    if not models:
        raise ValueError("nothing to aggregate")
    first = models[0]
    for m in models[1:]:
        if not first.same_shape(m):
            raise ValueError("cannot aggregate models of different shapes")
    n = len(models)
    layers = []
    for i in range(len(first.layers)):
        w = sum(m.layers[i][0] for m in models) / n
        b = sum(m.layers[i][1] for m in models) / n
        layers.append((w, b))
    return nn.ModelWeights(layers)


def _map(fn: Callable, items: list, threads: int) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    # results come back in submission order, so the barrier is the list itself
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))


def cluster_metric(cfg: ExperimentConfig):
    return lr_distance if cfg.clustering.lr_only else distance


def setup_federation(cfg: ExperimentConfig, mode: str, train: Dataset,
                     test: Dataset) -> Federation:
    """Split data, shard the client pool, pre-train the server, sample client genomes.

    Everything here depends only on ``cfg.seed``, so both modes start from an
    identical state.
    """
    if mode not in ("genetic_cfl", "generic_fl"):
        raise ValueError(f"unknown mode {mode!r}")
    arch = nn.ModelArch(tuple(cfg.model))
    nn.check_arch(arch, train.dim, train.classes)
    seed = cfg.seed
    d = cfg.data

    server_rows, pool = split_server_subset(len(train), d.server_fraction,
                                            derive_seed(seed, _SERVER_SPLIT))
    max_shard = min(d.max_shard, len(pool))
    min_shard = min(d.min_shard, max_shard)
    plan = partition_non_iid(train, cfg.federation.n_clients_total, min_shard, max_shard,
                             derive_seed(seed, _SHARDS), skew=d.skew,
                             disjoint=d.disjoint, pool=pool)
    active_rng = np.random.default_rng(derive_seed(seed, _ACTIVE))
    active = np.sort(active_rng.choice(cfg.federation.n_clients_total, size=cfg.n_active,
                                       replace=False))

    server = nn.init_weights(arch, derive_seed(seed, _INIT))
    pre = cfg.federation.pretrain
    if len(server_rows) and pre.epochs > 0:
        server, report = nn.train(server, train.images[server_rows], train.labels[server_rows],
                                  HyperParams(pre.lr, pre.batch_size), pre.epochs,
                                  derive_seed(seed, _PRETRAIN))
        log.info("server pre-trained on %d rows, loss %.4f", len(server_rows), report.final_loss)

    fixed = cfg.fixed_hp if mode == "generic_fl" else None
    clients = []
    for idx in active:
        idx = int(idx)
        hp = fixed or sample(cfg.bounds, derive_seed(seed, _HP, idx))
        clients.append(ClientState(idx, plan.shards[idx], hp))
    return Federation(cfg, mode, train, test, server, clients, plan)


def _train_client(fed: Federation, client: ClientState, hp: HyperParams, rnd: int,
                  slot: int, epochs: int):
    x = fed.train.images[client.shard]
    y = fed.train.labels[client.shard]
    return nn.train(fed.server, x, y, hp, epochs,
                    derive_seed(fed.seed, _TRAIN, rnd, client.index, slot))


def probe_candidates(fed: Federation, client: ClientState, k: int) -> list[HyperParams]:
    """The client's own genome plus ``k - 1`` freshly sampled learning rates."""
    rng = np.random.default_rng(derive_seed(fed.seed, _PROBE, client.index))
    lrs = [client.hp.lr] + [sample_lr(fed.config.bounds, rng) for _ in range(k - 1)]
    return [HyperParams(lr, client.hp.batch_size) for lr in lrs]


def broadcast_round(fed: Federation, k_candidates: Optional[int] = None,
                    threads: Optional[int] = None) -> Federation:
    """Probe learning rates, keep each client's best model, average, then cluster.

    ``k_candidates`` defaults to the configured value in genetic mode and to 1
    in generic mode.
    """
    cfg = fed.config
    if k_candidates is None:
        k_candidates = cfg.federation.k_candidates if fed.mode == "genetic_cfl" else 1
    if k_candidates < 1:
        raise ValueError("k_candidates must be at least 1")
    if not fed.clients:
        raise ValueError("no clients to broadcast to")
    threads = resolve_threads(threads)

    cands = [probe_candidates(fed, c, k_candidates) for c in fed.clients]
    jobs = [(c, hp, j) for c, hps in zip(fed.clients, cands) for j, hp in enumerate(hps)]
    results = iter(_map(lambda job: _train_client(fed, job[0], job[1], 0, job[2], 1),
                        jobs, threads))

    winners = []
    for c, hps in zip(fed.clients, cands):
        mine = [next(results) for _ in hps]
        best = min(range(len(hps)), key=lambda j: (mine[j][1].final_loss, j))
        c.hp = hps[best]
        c.last_loss = mine[best][1].final_loss
        winners.append(mine[best][0])

    fed.server = _checked(aggregate(winners))
    if fed.mode == "genetic_cfl":
        assign_clusters(fed)
    fed.broadcast = _record(fed, 0)
    return fed


def assign_clusters(fed: Federation) -> ClusterAssignment:
    points = [c.hp for c in fed.clients]
    fed.assignment = dbscan(points, fed.config.dbscan, cluster_metric(fed.config))
    for c, lab in zip(fed.clients, fed.assignment.labels):
        c.cluster_id = lab
    log.info("%d clients -> %d clusters (%d dense, %d noise)", len(points),
             fed.assignment.n_clusters, fed.assignment.n_raw_clusters, fed.assignment.n_noise)
    return fed.assignment


def _groups(fed: Federation) -> list[list[int]]:
    """Positions in ``fed.clients`` per cluster; one group per client when unclustered."""
    if fed.assignment is None:
        return [[i] for i in range(len(fed.clients))]
    return fed.assignment.members()


def _record(fed: Federation, rnd: int) -> RoundMetrics:
    acc, loss = nn.evaluate(fed.server, fed.test.images, fed.test.labels)
    if not np.isfinite(loss):
        raise nn.DivergenceError(f"server loss is not finite after round {rnd}")
    per_cluster = []
    for g, members in enumerate(_groups(fed)):
        cs = [fed.clients[i] for i in members]
        per_cluster.append(ClusterRecord(
            cs[0].cluster_id if cs[0].cluster_id is not None else g,
            tuple(c.index for c in cs),
            tuple(c.hp for c in cs),
            tuple(float(c.last_loss) for c in cs),
        ))
    return RoundMetrics(rnd, acc, loss, tuple(per_cluster))


def _checked(w: nn.ModelWeights) -> nn.ModelWeights:
    if not w.is_finite():
        raise nn.DivergenceError("aggregated server model is not finite")
    return w


def evolve_clusters(fed: Federation, rnd: int, rng_factory: Optional[Callable] = None) -> None:
    """Replace each cluster's genomes with the next generation.

    Slot k of the evolved population goes to the cluster's k-th client in
    ascending client order.
    """
    cfg = fed.config
    for cid, members in enumerate(fed.assignment.members()):
        cs = [fed.clients[i] for i in members]
        pop = Population(tuple(c.hp for c in cs), tuple(c.last_loss for c in cs))
        rng = (rng_factory(rnd, cid) if rng_factory is not None
               else np.random.default_rng(derive_seed(fed.seed, _EVOLVE, rnd, cid)))
        nxt = evolve(pop, min(cfg.genetic.elite_count, len(pop)), rng, cfg.bounds,
                     mutate_singleton=cfg.genetic.mutate_singletons)
        for c, hp in zip(cs, nxt.members):
            c.hp = hp


def run_rounds(fed: Federation, rounds: Optional[int] = None, threads: Optional[int] = None,
               rng_factory: Optional[Callable] = None) -> list[RoundMetrics]:
    """Run evolve -> train -> aggregate rounds and return one record per round.

    ``rng_factory(round, cluster_id)`` overrides the evolution generator,
    which lets tests script parent picks and mutation factors.
    """
    cfg = fed.config
    rounds = cfg.federation.rounds if rounds is None else rounds
    if rounds and fed.mode == "genetic_cfl" and fed.assignment is None:
        raise RuntimeError("run the broadcast round before genetic rounds")
    threads = resolve_threads(threads)
    epochs = cfg.federation.epochs_per_round
    out = []
    for _ in range(rounds):
        rnd = fed.rounds_done + 1
        if fed.mode == "genetic_cfl" and cfg.genetic.evolve:
            evolve_clusters(fed, rnd, rng_factory)
        results = _map(lambda c: _train_client(fed, c, c.hp, rnd, 0, epochs),
                       fed.clients, threads)
        for c, (_, report) in zip(fed.clients, results):
            c.last_loss = report.final_loss
        fed.server = _checked(aggregate([w for w, _ in results]))
        fed.rounds_done = rnd
        metrics = _record(fed, rnd)
        log.info("[%s] round %d: acc %.4f loss %.4f", fed.mode, rnd,
                 metrics.server_accuracy, metrics.server_loss)
        fed.history.append(metrics)
        out.append(metrics)
    return out


def load_datasets(cfg: ExperimentConfig) -> tuple[Dataset, Dataset]:
    from .data import load_idx

    d = cfg.data
    train = load_idx(cfg.resolve(d.train_images), cfg.resolve(d.train_labels), d.classes)
    test = load_idx(cfg.resolve(d.test_images), cfg.resolve(d.test_labels), d.classes)
    return train, test


def run_experiment(cfg: ExperimentConfig, mode: str, train: Dataset, test: Dataset,
                   threads: Optional[int] = None) -> Federation:
    """Set up, run the broadcast round, then all configured rounds."""
    fed = setup_federation(cfg, mode, train, test)
    broadcast_round(fed, threads=threads)
    run_rounds(fed, threads=threads)
    return fed
