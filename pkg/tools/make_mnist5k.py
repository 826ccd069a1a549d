"""Write the 5000-image MNIST sample bundled with mlxtend as gzipped IDX files.

Produces a stratified 4000/1000 train/test split (400/100 per digit) under
``data/mnist5k/`` using the standard MNIST file names, so the simulator can
run without network access. Requires ``pip install mlxtend``.

    python tools/make_mnist5k.py [OUT_DIR]
"""

import gzip
import sys
from pathlib import Path

import numpy as np
from mlxtend.data import mnist_data

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))
from gencfl.data import encode_idx  # noqa: E402

TEST_PER_CLASS = 100


def main(out_dir: Path) -> None:
    x, y = mnist_data()
    x = x.astype(np.uint8).reshape(-1, 28, 28)
    y = y.astype(np.uint8)

    rng = np.random.default_rng(20211204)
    test_idx = []
    for c in range(10):
        idx = np.flatnonzero(y == c)
        test_idx.extend(rng.choice(idx, size=TEST_PER_CLASS, replace=False))
    test_mask = np.zeros(len(y), dtype=bool)
    test_mask[test_idx] = True
    train_order = rng.permutation(np.flatnonzero(~test_mask))
    test_order = rng.permutation(np.flatnonzero(test_mask))

    out_dir.mkdir(parents=True, exist_ok=True)
    files = {
        "train-images-idx3-ubyte.gz": x[train_order],
        "train-labels-idx1-ubyte.gz": y[train_order],
        "t10k-images-idx3-ubyte.gz": x[test_order],
        "t10k-labels-idx1-ubyte.gz": y[test_order],
    }
    for name, arr in files.items():
        # mtime=0 keeps the archives byte-stable across regenerations
        with open(out_dir / name, "wb") as raw:
            with gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as f:
                f.write(encode_idx(arr))
        print(f"{name}: {arr.shape}")


if __name__ == "__main__":
    root = Path(__file__).resolve().parents[1]
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else root / "data" / "mnist5k")
