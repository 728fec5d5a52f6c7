"""Trainer CLI.

    photonfi-train train --variant l2+n3 --seed 2024 --out fixtures/l2+n3.slwa \
        --images data/train-images-idx3-ubyte.gz --labels data/train-labels-idx1-ubyte.gz \
        --test-images data/test-images-idx3-ubyte.gz --test-labels data/test-labels-idx1-ubyte.gz

    photonfi-train fixtures --out fixtures/ --images ... (trains original + l2+n3)

`--sigma` and `--l2` override the values implied by the variant tag.
"""

from __future__ import annotations

import argparse
import sys

from .train import export_fixture_set, train_variant


def _data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--images", default="data/train-images-idx3-ubyte.gz")
    p.add_argument("--labels", default="data/train-labels-idx1-ubyte.gz")
    p.add_argument("--test-images", default="data/test-images-idx3-ubyte.gz")
    p.add_argument("--test-labels", default="data/test-labels-idx1-ubyte.gz")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--sigma", type=float, default=None, help="override noise std ratio")
    p.add_argument("--l2", type=float, default=None, help="override L2 lambda")
    p.add_argument("--noise-in", choices=("weights", "activations"), default=None)
    p.add_argument("--noise-ref", choices=("std", "max"), default=None,
                   help="per-layer noise scale reference")
    p.add_argument("--log-every", type=int, default=0)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="photonfi-train", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one variant and write its archive")
    t.add_argument("--variant", required=True,
                   help="original | l2 | n1..n9 | l2+n1..l2+n9")
    t.add_argument("--out", required=True)
    _data_args(t)

    fx = sub.add_parser("fixtures", help="train and export the fixture archives")
    fx.add_argument("--out", required=True, help="output directory")
    fx.add_argument("--robust-variant", default="l2+n3")
    _data_args(fx)

    args = ap.parse_args(argv)
    overrides = {
        "epochs": args.epochs, "lr": args.lr, "seed": args.seed,
        "noise_sigma": args.sigma, "reg_lambda": args.l2, "noise_in": args.noise_in,
        "noise_ref": args.noise_ref,
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    try:
        if args.command == "train":
            manifest = train_variant(args.variant, args.images, args.labels,
                                     args.test_images, args.test_labels, args.out,
                                     log_every=args.log_every, **overrides)
            print(f"{args.variant}: test accuracy {manifest['test_accuracy']:.4f} -> {args.out}")
        else:
            export_fixture_set(args.out, args.images, args.labels,
                               args.test_images, args.test_labels,
                               robust_variant=args.robust_variant,
                               log_every=args.log_every, **overrides)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
