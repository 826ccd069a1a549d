"""DBSCAN over client hyper-parameters.

The neighbourhood of a point includes the point itself and uses ``<= eps``,
so ``min_pts=1`` never yields noise. Clusters are numbered in scan order and
a border point joins the first cluster that reaches it. Noise points are
afterwards promoted to singleton clusters, numbered after the dense ones.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .hp import HyperParams, distance

NOISE = -1


@dataclass(frozen=True)
class DbscanParams:
    epsilon: float = 0.2
    min_pts: int = 2

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.min_pts < 1:
            raise ValueError(f"min_pts must be at least 1, got {self.min_pts}")


@dataclass(frozen=True)
class ClusterAssignment:
    labels: tuple[int, ...]       # after noise promotion
    raw_labels: tuple[int, ...]   # DBSCAN output, NOISE for outliers
    n_clusters: int
    n_raw_clusters: int

    @property
    def n_noise(self) -> int:
        return sum(1 for lab in self.raw_labels if lab == NOISE)

    def members(self) -> list[list[int]]:
        """Client indices of each cluster, in ascending order."""
        groups = [[] for _ in range(self.n_clusters)]
        for i, lab in enumerate(self.labels):
            groups[lab].append(i)
        return groups


@dataclass(frozen=True)
class SweepRow:
    epsilon: float
    min_pts: int
    clusters_raw: int
    clusters_promoted: int


def pairwise(points: Sequence[HyperParams], metric: Callable = distance) -> np.ndarray:
    n = len(points)
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d[i, j] = d[j, i] = metric(points[i], points[j])
    return d


def dbscan_from_distances(d: np.ndarray, params: DbscanParams) -> ClusterAssignment:
    n = len(d)
    if n == 0:
        raise ValueError("cannot cluster an empty population")
    neighbours = [np.flatnonzero(d[i] <= params.epsilon) for i in range(n)]
    core = np.array([len(nb) >= params.min_pts for nb in neighbours])

    raw = np.full(n, NOISE)
    cid = 0
    for i in range(n):
        if raw[i] != NOISE or not core[i]:
            continue
        raw[i] = cid
        queue = deque(neighbours[i])
        while queue:
            j = queue.popleft()
            if raw[j] != NOISE:
                continue
            raw[j] = cid
            if core[j]:
                queue.extend(neighbours[j])
        cid += 1

    labels = raw.copy()
    nxt = cid
    for i in range(n):
        if labels[i] == NOISE:
            labels[i] = nxt
            nxt += 1
    return ClusterAssignment(tuple(int(v) for v in labels), tuple(int(v) for v in raw),
                             int(nxt), int(cid))


def dbscan(points: Sequence[HyperParams], params: DbscanParams,
           metric: Callable = distance) -> ClusterAssignment:
    return dbscan_from_distances(pairwise(points, metric), params)


def sweep(points: Sequence[HyperParams], epsilons: Sequence[float],
          min_pts_list: Sequence[int], metric: Callable = distance) -> list[SweepRow]:
    """Cluster counts for every (epsilon, min_pts) combination, epsilon-major."""
    if not epsilons or not min_pts_list:
        raise ValueError("sweep needs at least one epsilon and one min_pts value")
    d = pairwise(points, metric)
    rows = []
    for eps in epsilons:
        for mp in min_pts_list:
            a = dbscan_from_distances(d, DbscanParams(float(eps), int(mp)))
            rows.append(SweepRow(float(eps), int(mp), a.n_raw_clusters, a.n_clusters))
    return rows
