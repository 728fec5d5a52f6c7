#!/usr/bin/env python3
"""End-to-end attack study: sweep two model variants, print recovery table.

Runs the full scenario matrix (actuation + hotspot x CONV/FC/BOTH x
1/5/10%) against an original and a robust archive under identical attack
trials, then reports box-whisker summaries and the per-scenario recovery of
the robust variant.

    python scripts/attack_sweep.py --original fixtures/original.slwa \
        --robust fixtures/l2+n3.slwa --out runs/sweep [--trials 10]
"""

from __future__ import annotations

import argparse
import os
import sys

from photonfi.accelerator import AcceleratorConfig
from photonfi.campaign import (
    CampaignConfig,
    Scenario,
    VariantSpec,
    emit_summary,
    recovery_csv,
    recovery_metrics,
    run_campaign,
)

REPO = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--original", default=os.path.join(REPO, "fixtures", "original.slwa"))
    ap.add_argument("--robust", default=os.path.join(REPO, "fixtures", "l2+n3.slwa"))
    ap.add_argument("--out", default="runs/sweep")
    ap.add_argument("--trials", type=int, default=10)
    ap.add_argument("--subsample", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=20240809)
    ap.add_argument("--images", default=os.path.join(REPO, "data", "test-images-idx3-ubyte.gz"))
    ap.add_argument("--labels", default=os.path.join(REPO, "data", "test-labels-idx1-ubyte.gz"))
    args = ap.parse_args()

    scenarios = [Scenario(kind, scope, fraction)
                 for kind in ("actuation", "hotspot")
                 for scope in ("CONV", "FC", "BOTH")
                 for fraction in (0.01, 0.05, 0.10)]
    cfg = CampaignConfig(
        variants=[VariantSpec("original", args.original),
                  VariantSpec("robust", args.robust)],
        dataset_images=args.images, dataset_labels=args.labels,
        scenarios=scenarios, trials=args.trials, master_seed=args.seed,
        subsample=args.subsample, out_dir=args.out,
        accelerator=AcceleratorConfig(off_resonance_value=0.0),
    )
    report = run_campaign(cfg)
    print(emit_summary(report))

    rows = recovery_metrics(report, report, "original", "robust")
    table = recovery_csv(rows)
    path = os.path.join(args.out, "recovery.csv")
    with open(path, "w", encoding="utf-8") as f:
        f.write(table)
    print(table)
    print(f"rows: {args.out}/rows.csv  report: {args.out}/report.json  recovery: {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
