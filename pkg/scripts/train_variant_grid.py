#!/usr/bin/env python3
"""Train the full mitigation-variant grid and summarize clean accuracies.

Produces one archive per variant tag: the plain baseline, L2 alone,
noise-aware alone (n1..n9) and the combined grid (l2+n1..l2+n9), i.e. the
model zoo the box-whisker comparison sweeps over.  Expect roughly two
minutes per variant on a laptop-class CPU.

    python scripts/train_variant_grid.py --out runs/variants \
        [--skip-noise-only] [--epochs N] [--seed N]
"""

from __future__ import annotations

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "trainer", "src"))

from photonfi_trainer.train import train_variant  # noqa: E402

REPO = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/variants")
    ap.add_argument("--epochs", type=int, default=60)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--skip-noise-only", action="store_true",
                    help="train only the baseline, l2, and l2+n* variants")
    ap.add_argument("--images", default=os.path.join(REPO, "data", "train-images-idx3-ubyte.gz"))
    ap.add_argument("--labels", default=os.path.join(REPO, "data", "train-labels-idx1-ubyte.gz"))
    ap.add_argument("--test-images", default=os.path.join(REPO, "data", "test-images-idx3-ubyte.gz"))
    ap.add_argument("--test-labels", default=os.path.join(REPO, "data", "test-labels-idx1-ubyte.gz"))
    args = ap.parse_args()

    tags = ["original", "l2"] + [f"l2+n{i}" for i in range(1, 10)]
    if not args.skip_noise_only:
        tags += [f"n{i}" for i in range(1, 10)]

    os.makedirs(args.out, exist_ok=True)
    results = {}
    for tag in tags:
        path = os.path.join(args.out, f"{tag}.slwa")
        manifest = train_variant(tag, args.images, args.labels,
                                 args.test_images, args.test_labels, path,
                                 epochs=args.epochs, seed=args.seed)
        results[tag] = manifest["test_accuracy"]
        print(f"{tag:8s} clean accuracy {results[tag]:.4f} -> {path}")

    print("\nvariant grid summary")
    for tag, acc in results.items():
        print(f"  {tag:8s} {acc:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
