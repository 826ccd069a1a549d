"""MNIST-format datasets and non-IID client sharding.

IDX files are read bit-exactly (big-endian header, unsigned-byte payload).
Gzipped files, as MNIST is usually distributed, are detected by their magic
bytes and decompressed transparently.
"""

from __future__ import annotations

import gzip
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
_GZIP_MAGIC = b"\x1f\x8b"


class DatasetError(Exception):
    """Base class for dataset loading problems."""


class BadMagicError(DatasetError):
    pass


class TruncatedFileError(DatasetError):
    pass


class CountMismatchError(DatasetError):
    pass


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray  # (N, D) float64 in [0, 1]
    labels: np.ndarray  # (N,) int64
    classes: int

    def __post_init__(self):
        if self.images.ndim != 2:
            raise ValueError("images must be an N x D matrix")
        if len(self.images) != len(self.labels):
            raise ValueError(
                f"{len(self.images)} images but {len(self.labels)} labels")
        if self.classes < 1:
            raise ValueError("classes must be positive")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.classes):
            raise ValueError(f"labels outside [0, {self.classes})")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.images.shape[1]

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.images[indices], self.labels[indices], self.classes)


@dataclass(frozen=True)
class ShardPlan:
    shards: tuple[np.ndarray, ...]
    seed: int

    def __len__(self) -> int:
        return len(self.shards)


def _read_bytes(path) -> bytes:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc.strerror or exc}") from exc
    if raw[:2] == _GZIP_MAGIC:
        try:
            raw = gzip.decompress(raw)
        except (EOFError, OSError) as exc:
            raise TruncatedFileError(f"{path}: corrupt gzip stream ({exc})") from exc
    return raw


def decode_idx(raw: bytes, expected_magic: int, source="<bytes>") -> np.ndarray:
    """Decode an unsigned-byte IDX payload into an array of its declared shape."""
    if len(raw) < 4:
        raise TruncatedFileError(f"{source}: file shorter than the IDX magic number")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise BadMagicError(
            f"{source}: magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise TruncatedFileError(f"{source}: header truncated")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    size = math.prod(dims)
    if len(raw) - header < size:
        raise TruncatedFileError(
            f"{source}: expected {size} payload bytes, found {len(raw) - header}")
    return np.frombuffer(raw, dtype=np.uint8, count=size, offset=header).reshape(dims)


def encode_idx(arr: np.ndarray) -> bytes:
    """Encode a uint8 array (1-D labels or 3-D images) as raw IDX bytes."""
    arr = np.asarray(arr)
    if arr.dtype != np.uint8:
        raise TypeError("IDX encoding here supports uint8 payloads only")
    magic = 0x00000800 | arr.ndim
    return struct.pack(f">I{arr.ndim}I", magic, *arr.shape) + arr.tobytes()


def load_idx(images_path, labels_path, classes: int = 10) -> Dataset:
    """Load an image/label IDX pair; pixels are scaled by 1/255."""
    images = decode_idx(_read_bytes(images_path), IMAGES_MAGIC, str(images_path))
    labels = decode_idx(_read_bytes(labels_path), LABELS_MAGIC, str(labels_path))
    if len(images) != len(labels):
        raise CountMismatchError(
            f"{images_path} has {len(images)} images but {labels_path} has {len(labels)} labels")
    x = images.reshape(len(images), -1).astype(np.float64) / 255.0
    y = labels.astype(np.int64)
    if len(y) and y.max() >= classes:
        raise DatasetError(f"{labels_path}: label {y.max()} outside [0, {classes})")
    return Dataset(x, y, classes)


def skew_to_alpha(skew: float) -> float:
    """Map label skew in [0, 1] to a Dirichlet concentration.

    skew=0 is IID (infinite alpha), skew=0.5 gives alpha=1 and skew=1 gives 0.1.
    """
    if not 0.0 <= skew <= 1.0:
        raise ValueError(f"skew must lie in [0, 1], got {skew}")
    if skew == 0.0:
        return math.inf
    exponent = (1.0 - skew) / skew
    return math.inf if exponent > 300 else 0.1 * 10.0 ** exponent


def _classes_allowed(skew: float, classes: int) -> int:
    # top-k truncation so that maximal skew leaves at most two labels per shard
    return classes - int(round((classes - min(2, classes)) * skew))


def _draw_shard(rng, by_class, size, skew, classes, available=None) -> np.ndarray:
    # available: per-class pools for disjoint mode, consumed in place
    pools = by_class if available is None else available
    counts = np.array([len(p) for p in pools])
    if counts.sum() == 0:
        return np.empty(0, dtype=np.int64)
    alpha = skew_to_alpha(skew)
    if math.isinf(alpha):
        weights = counts.astype(np.float64)
    else:
        weights = rng.dirichlet(np.full(classes, alpha))
        keep = _classes_allowed(skew, classes)
        weights[np.argsort(-weights, kind="stable")[keep:]] = 0.0
        weights[counts == 0] = 0.0
        if weights.sum() <= 0.0:
            weights = counts.astype(np.float64)
    size = min(size, int(counts[weights > 0].sum()))

    # multinomial draw, then spill overflow onto the heaviest classes with room
    take = rng.multinomial(size, weights / weights.sum())
    take = np.minimum(take, counts)
    order = np.argsort(-weights, kind="stable")
    deficit = size - take.sum()
    for c in order:
        if deficit == 0:
            break
        if weights[c] == 0:
            continue
        extra = min(deficit, counts[c] - take[c])
        take[c] += extra
        deficit -= extra

    picked = []
    for c in range(classes):
        if take[c] == 0:
            continue
        if available is None:
            picked.append(rng.choice(pools[c], size=take[c], replace=False))
        else:
            pos = rng.choice(len(pools[c]), size=take[c], replace=False)
            picked.append(pools[c][pos])
            available[c] = np.delete(pools[c], pos)
    return rng.permutation(np.concatenate(picked))


def partition_non_iid(ds: Dataset, n_clients: int, min_size: int, max_size: int,
                      seed: int, skew: float = 0.5, disjoint: bool = False,
                      pool=None) -> ShardPlan:
    """Give each client a random-size, label-skewed subset of ``ds``.

    Shard sizes are uniform in ``[min_size, max_size]``. Indices are unique
    within a shard; shards overlap unless ``disjoint`` is set. ``pool``
    optionally restricts sampling to a subset of row indices.
    """
    pool = np.arange(len(ds)) if pool is None else np.asarray(pool, dtype=np.int64)
    if n_clients < 1:
        raise ValueError("n_clients must be at least 1")
    if not 1 <= min_size <= max_size <= len(pool):
        raise ValueError(
            f"need 1 <= min_size <= max_size <= {len(pool)}, got {min_size}, {max_size}")
    if disjoint and n_clients * min_size > len(pool):
        raise ValueError("disjoint shards cannot all reach min_size")
    rng = np.random.default_rng(seed)
    labels = ds.labels[pool]
    by_class = [pool[labels == c] for c in range(ds.classes)]
    available = [p.copy() for p in by_class] if disjoint else None

    shards = []
    for _ in range(n_clients):
        size = int(rng.integers(min_size, max_size + 1))
        shard = _draw_shard(rng, by_class, size, skew, ds.classes, available)
        if len(shard) == 0:
            raise ValueError("ran out of samples while building disjoint shards")
        shards.append(shard)
    return ShardPlan(tuple(shards), seed)


def split_server_subset(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Split row indices into (server pre-training rows, client pool rows)."""
    if not 0.0 <= fraction < 1.0:
        raise ValueError("server fraction must lie in [0, 1)")
    perm = np.random.default_rng(seed).permutation(n)
    k = int(round(n * fraction))
    return np.sort(perm[:k]), np.sort(perm[k:])
