import gzip
import os
import struct
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from gencfl.data import (BadMagicError, CountMismatchError, Dataset, DatasetError,
                         TruncatedFileError, decode_idx, encode_idx, load_idx,
                         partition_non_iid, skew_to_alpha, split_server_subset)


def _images_bytes(pixels, rows=2, cols=2):
    n = len(pixels) // (rows * cols)
    return struct.pack(">IIII", 0x803, n, rows, cols) + bytes(pixels)


def _labels_bytes(labels):
    return struct.pack(">II", 0x801, len(labels)) + bytes(labels)


@pytest.fixture
def tiny_idx(tmp_path):
    # image 0 all black, image 1 all white
    img = tmp_path / "img.idx"
    lab = tmp_path / "lab.idx"
    img.write_bytes(_images_bytes([0, 0, 0, 0, 255, 255, 255, 255]))
    lab.write_bytes(_labels_bytes([3, 7]))
    return img, lab


def test_hand_built_fixture_decodes_exactly(tiny_idx):
    ds = load_idx(*tiny_idx)
    assert ds.images.shape == (2, 4)
    assert ds.images[0].tolist() == [0.0] * 4
    assert ds.images[1].tolist() == [1.0] * 4
    assert ds.labels.tolist() == [3, 7]
    assert ds.images.dtype == np.float64


def test_gzipped_files_are_read_transparently(tiny_idx, tmp_path):
    img, lab = tiny_idx
    gz = tmp_path / "img.idx.gz"
    gz.write_bytes(gzip.compress(img.read_bytes()))
    assert np.array_equal(load_idx(gz, lab).images, load_idx(img, lab).images)


def test_wrong_label_magic(tiny_idx, tmp_path):
    img, _ = tiny_idx
    bad = tmp_path / "bad.idx"
    bad.write_bytes(struct.pack(">II", 0x803, 2) + bytes([3, 7]))
    with pytest.raises(BadMagicError):
        load_idx(img, bad)


def test_truncated_payload(tiny_idx, tmp_path):
    _, lab = tiny_idx
    short = tmp_path / "short.idx"
    short.write_bytes(_images_bytes([0, 0, 0, 0, 255, 255, 255, 255])[:-1])
    with pytest.raises(TruncatedFileError):
        load_idx(short, lab)
    stub = tmp_path / "stub.idx"
    stub.write_bytes(b"\x00\x00")
    with pytest.raises(TruncatedFileError):
        load_idx(stub, lab)


def test_count_mismatch(tiny_idx, tmp_path):
    img, _ = tiny_idx
    three = tmp_path / "three.idx"
    three.write_bytes(_labels_bytes([1, 2, 3]))
    with pytest.raises(CountMismatchError):
        load_idx(img, three)


def test_errors_are_distinct_types():
    kinds = {BadMagicError, TruncatedFileError, CountMismatchError}
    assert len(kinds) == 3 and all(issubclass(k, DatasetError) for k in kinds)


def test_missing_file_is_a_dataset_error(tmp_path, tiny_idx):
    with pytest.raises(DatasetError):
        load_idx(tmp_path / "nope", tiny_idx[1])


def test_encode_decode_round_trip():
    arr = np.arange(24, dtype=np.uint8).reshape(2, 3, 4)
    assert np.array_equal(decode_idx(encode_idx(arr), 0x803), arr)


def test_bundled_sample_dimensions(mnist5k):
    train, test = mnist5k
    assert (len(train), train.dim, train.classes) == (4000, 784, 10)
    assert (len(test), test.dim) == (1000, 784)
    assert np.bincount(train.labels).tolist() == [400] * 10
    assert 0.0 <= train.images.min() and train.images.max() == 1.0


@pytest.mark.skipif("GENCFL_MNIST_DIR" not in os.environ,
                    reason="set GENCFL_MNIST_DIR to a directory with the full MNIST files")
def test_canonical_mnist_dimensions():
    root = Path(os.environ["GENCFL_MNIST_DIR"])

    def pick(stem):
        return next(p for p in (root / stem, root / f"{stem}.gz") if p.exists())

    ds = load_idx(pick("train-images-idx3-ubyte"), pick("train-labels-idx1-ubyte"))
    assert (len(ds), ds.dim, ds.classes) == (60000, 784, 10)


def _balanced(n_per_class=300, classes=10):
    y = np.repeat(np.arange(classes), n_per_class)
    return Dataset(np.zeros((len(y), 1)), y, classes)


def test_fixed_size_shards():
    plan = partition_non_iid(_balanced(), 10, 100, 100, seed=0)
    assert [len(s) for s in plan.shards] == [100] * 10


def test_partition_is_deterministic():
    a = partition_non_iid(_balanced(), 8, 20, 90, seed=5)
    b = partition_non_iid(_balanced(), 8, 20, 90, seed=5)
    assert all(np.array_equal(x, y) for x, y in zip(a.shards, b.shards))


def test_maximal_skew_gives_at_most_two_labels():
    ds = _balanced()
    plan = partition_non_iid(ds, 10, 50, 200, seed=3, skew=1.0)
    assert max(len(np.unique(ds.labels[s])) for s in plan.shards) <= 2


def test_zero_skew_matches_global_label_mix():
    ds = _balanced(n_per_class=1000)
    plan = partition_non_iid(ds, 5, 2000, 2000, seed=11, skew=0.0)
    for shard in plan.shards:
        counts = np.bincount(ds.labels[shard], minlength=10)
        assert stats.chisquare(counts).pvalue > 0.001


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 1.0), st.integers(1, 150), st.booleans())
def test_shard_indices_valid_and_unique(seed, skew, lo, disjoint):
    ds = _balanced(n_per_class=60)
    hi = min(600 // 6, max(lo, 20)) if disjoint else 150
    lo = min(lo, hi)
    plan = partition_non_iid(ds, 6, lo, hi, seed=seed, skew=skew, disjoint=disjoint)
    for s in plan.shards:
        assert len(s) > 0
        assert len(np.unique(s)) == len(s)
        assert s.min() >= 0 and s.max() < len(ds)
    if disjoint:
        everything = np.concatenate(plan.shards)
        assert len(np.unique(everything)) == len(everything)


def test_pool_restricts_sampling():
    ds = _balanced()
    pool = np.arange(0, len(ds), 2)
    plan = partition_non_iid(ds, 4, 30, 60, seed=0, pool=pool)
    assert all(np.isin(s, pool).all() for s in plan.shards)


@pytest.mark.parametrize("kw", [
    dict(n_clients=0, min_size=1, max_size=5),
    dict(n_clients=2, min_size=0, max_size=5),
    dict(n_clients=2, min_size=6, max_size=5),
    dict(n_clients=2, min_size=1, max_size=10**6),
])
def test_partition_bounds_violations(kw):
    with pytest.raises(ValueError):
        partition_non_iid(_balanced(), seed=0, **kw)


def test_skew_mapping_endpoints():
    assert skew_to_alpha(0.0) == float("inf")
    assert skew_to_alpha(1.0) == pytest.approx(0.1)
    assert skew_to_alpha(0.5) == pytest.approx(1.0)
    assert skew_to_alpha(0.25) > skew_to_alpha(0.75)
    with pytest.raises(ValueError):
        skew_to_alpha(1.5)


def test_server_split_is_disjoint_and_complete():
    server, pool = split_server_subset(1000, 0.05, seed=1)
    assert len(server) == 50 and len(pool) == 950
    assert not np.intersect1d(server, pool).size
    assert np.array_equal(np.sort(np.r_[server, pool]), np.arange(1000))
