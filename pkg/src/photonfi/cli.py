"""Command-line interface.

    photonfi validate --config campaign.toml
    photonfi run      --config campaign.toml [--seed N] [--trials N]
                      [--subsample N] [--out DIR]
    photonfi compare  --original runs/a/report.json --robust runs/b/report.json
                      [--out recovery.csv] [--original-variant TAG]
                      [--robust-variant TAG]
    photonfi emit     --report runs/a/report.json --out DIR

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import campaign
from .errors import ConfigError


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="photonfi", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a campaign config")
    v.add_argument("--config", required=True)

    r = sub.add_parser("run", help="run a campaign")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int, default=None, help="override master seed")
    r.add_argument("--trials", type=int, default=None, help="override trials per scenario")
    r.add_argument("--subsample", type=int, default=None,
                   help="override evaluation subsample (0 = full set)")
    r.add_argument("--out", default=None, help="override output directory")
    r.add_argument("--no-resume", action="store_true",
                   help="ignore existing rows in the output directory")

    c = sub.add_parser("compare", help="recovery metrics between two campaign reports")
    c.add_argument("--original", required=True)
    c.add_argument("--robust", required=True)
    c.add_argument("--original-variant", default=None)
    c.add_argument("--robust-variant", default=None)
    c.add_argument("--out", default=None, help="write the recovery table CSV here")

    e = sub.add_parser("emit", help="regenerate CSV and summary from a report")
    e.add_argument("--report", required=True)
    e.add_argument("--out", required=True)
    return p


def _cmd_validate(args) -> int:
    cfg = campaign.load_config(args.config)
    print(f"config ok: {len(cfg.variants)} variants, {len(cfg.scenarios)} scenarios, "
          f"{cfg.trials} trials, hash {cfg.config_hash}")
    return 0


def _cmd_run(args) -> int:
    cfg = campaign.load_config(args.config)
    if args.seed is not None:
        cfg.master_seed = args.seed
    if args.trials is not None:
        cfg.trials = args.trials
    if args.subsample is not None:
        cfg.subsample = args.subsample
    if args.out is not None:
        cfg.out_dir = args.out
    report = campaign.run_campaign(cfg, resume=not args.no_resume)
    print(campaign.emit_summary(report))
    print(f"report: {cfg.out_dir}/report.json")
    return 0


def _cmd_compare(args) -> int:
    original = campaign.CampaignReport.load(args.original)
    robust = campaign.CampaignReport.load(args.robust)
    rows = campaign.recovery_metrics(original, robust,
                                     original_variant=args.original_variant,
                                     robust_variant=args.robust_variant)
    table = campaign.recovery_csv(rows)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(table)
    print(table)
    return 0


def _cmd_emit(args) -> int:
    report = campaign.CampaignReport.load(args.report)
    path = campaign.emit_csv(report, args.out)
    with open(f"{args.out}/summary.txt", "w", encoding="utf-8") as f:
        f.write(campaign.emit_summary(report))
    print(f"wrote {path} and {args.out}/summary.txt")
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = _build_parser().parse_args(argv)
    handler = {"validate": _cmd_validate, "run": _cmd_run,
               "compare": _cmd_compare, "emit": _cmd_emit}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
