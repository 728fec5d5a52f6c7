#!/usr/bin/env python3
"""Build the MNIST-subset IDX files this repo ships under data/.

Full MNIST (60k/10k ubyte files from the usual mirrors) is not reachable
from every build environment, so the committed dataset is the ~10.3k-image
MNIST subset redistributed by the `mnist` npm package (cazala/mnist, MIT),
converted to the standard IDX layout, split per class into train/test, and
gzipped deterministically.  The simulator's loader works just as well on
the real 60k/10k MNIST files if you have them.

Usage:
    python scripts/fetch_digits.py --out data/
    python scripts/fetch_digits.py --tarball mnist-1.1.0.tgz --out data/

Without --tarball the script runs `npm pack mnist@1.1.0` in a temp dir,
which needs an npm registry (or mirror).
"""

from __future__ import annotations

import argparse
import gzip
import io
import json
import os
import struct
import subprocess
import sys
import tarfile
import tempfile

import numpy as np

TEST_PER_CLASS = 200
SPLIT_SEED = 20240809


def obtain_tarball(path: str | None) -> bytes:
    if path:
        with open(path, "rb") as f:
            return f.read()
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(["npm", "pack", "mnist@1.1.0"], cwd=tmp, check=True,
                       stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)
        with open(os.path.join(tmp, "mnist-1.1.0.tgz"), "rb") as f:
            return f.read()


def load_digits(tarball: bytes) -> dict[int, np.ndarray]:
    """Per-digit uint8 image stacks (N_d, 28, 28) from the package JSON."""
    digits = {}
    with tarfile.open(fileobj=io.BytesIO(tarball), mode="r:gz") as tf:
        for d in range(10):
            member = tf.extractfile(f"package/src/digits/{d}.json")
            data = np.array(json.load(member)["data"], dtype=np.float64)
            imgs = np.round(data.reshape(-1, 28, 28) * 255.0).astype(np.uint8)
            digits[d] = imgs
    return digits


def write_idx_images(path: str, images: np.ndarray) -> None:
    header = struct.pack(">IIII", 0x00000803, images.shape[0], 28, 28)
    _write_gz(path, header + images.tobytes())


def write_idx_labels(path: str, labels: np.ndarray) -> None:
    header = struct.pack(">II", 0x00000801, labels.shape[0])
    _write_gz(path, header + labels.astype(np.uint8).tobytes())


def _write_gz(path: str, payload: bytes) -> None:
    # fixed mtime so the archives are byte-reproducible
    with open(path, "wb") as f:
        with gzip.GzipFile(fileobj=f, mode="wb", mtime=0) as g:
            g.write(payload)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--tarball", default=None, help="pre-downloaded mnist-1.1.0.tgz")
    ap.add_argument("--out", default="data")
    ap.add_argument("--test-per-class", type=int, default=TEST_PER_CLASS)
    ap.add_argument("--seed", type=int, default=SPLIT_SEED)
    args = ap.parse_args()

    digits = load_digits(obtain_tarball(args.tarball))
    rng = np.random.Generator(np.random.PCG64(args.seed))

    train_x, train_y, test_x, test_y = [], [], [], []
    for d in range(10):
        imgs = digits[d]
        order = rng.permutation(len(imgs))
        test_idx, train_idx = order[:args.test_per_class], order[args.test_per_class:]
        test_x.append(imgs[test_idx])
        test_y.append(np.full(len(test_idx), d, dtype=np.uint8))
        train_x.append(imgs[train_idx])
        train_y.append(np.full(len(train_idx), d, dtype=np.uint8))

    def shuffle_split(xs, ys):
        x = np.concatenate(xs)
        y = np.concatenate(ys)
        order = rng.permutation(len(x))
        return x[order], y[order]

    train_x, train_y = shuffle_split(train_x, train_y)
    test_x, test_y = shuffle_split(test_x, test_y)

    os.makedirs(args.out, exist_ok=True)
    write_idx_images(os.path.join(args.out, "train-images-idx3-ubyte.gz"), train_x)
    write_idx_labels(os.path.join(args.out, "train-labels-idx1-ubyte.gz"), train_y)
    write_idx_images(os.path.join(args.out, "test-images-idx3-ubyte.gz"), test_x)
    write_idx_labels(os.path.join(args.out, "test-labels-idx1-ubyte.gz"), test_y)
    print(f"wrote {len(train_x)} train / {len(test_x)} test images to {args.out}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
