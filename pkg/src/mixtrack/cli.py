"""Command-line entry point for Monte Carlo campaigns."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from mixtrack.harness import CampaignConfig, campaign_from_dict, run_campaign, write_report

log = logging.getLogger("mixtrack")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="mixtrack-mc",
        description="Monte Carlo comparison of Gaussian-mixture reduction schemes in a clutter tracking scenario.",
    )
    p.add_argument("--config", type=Path, help="campaign JSON file")
    p.add_argument("--clutter-rate", type=float, help="mean false alarms per scan")
    p.add_argument("--runs", type=int, help="number of Monte Carlo runs (default 200)")
    p.add_argument("--seed", type=int, help="base seed, unsigned 64-bit")
    p.add_argument("--schemes", help="comma list, e.g. capping-30,runnalls-5,runnalls-30,adaptive-30")
    p.add_argument("--sp", type=float, help="standard pruning threshold (default 5e-4)")
    p.add_argument("--nwp", type=float, help="normalized-weight pruning threshold, s^2/m^4 (default 1e-10)")
    p.add_argument("--alpha", type=float, help="relative loss threshold of the adaptive reduction (default 0.05)")
    p.add_argument("--out", type=Path, default=Path("report.csv"), help="summary CSV path")
    p.add_argument("--per-run", type=Path, help="per-run CSV path")
    p.add_argument("--trace", type=Path, help="directory for per-step trace CSVs")
    p.add_argument("--workers", type=int, default=1, help="worker processes")
    p.add_argument("-q", "--quiet", action="store_true")
    return p


def config_from_args(args) -> CampaignConfig:
    data: dict = {}
    if args.config is not None:
        with open(args.config) as fh:
            data = json.load(fh)
    for key, value in (
        ("clutter_rate", args.clutter_rate), ("runs", args.runs), ("base_seed", args.seed),
        ("sp", args.sp), ("nwp", args.nwp), ("alpha", args.alpha),
    ):
        if value is not None:
            data[key] = value
    if args.schemes is not None:
        data["schemes"] = [s for s in args.schemes.split(",") if s.strip()]
    base_dir = args.config.parent if args.config is not None else None
    return campaign_from_dict(data, base_dir=base_dir)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        cfg = config_from_args(args)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        log.error("invalid configuration: %s", exc)
        return 2

    def progress(done, total):
        if done == total or done % max(1, total // 10) == 0:
            log.info("run %d/%d", done, total)

    log.info(
        "clutter rate %g, %d runs, seed %d, schemes %s",
        cfg.scenario.clutter_rate, cfg.runs, cfg.base_seed, ",".join(s.name for s in cfg.schemes),
    )
    rep = run_campaign(cfg, keep_traces=args.trace is not None, workers=args.workers, progress=progress)
    try:
        write_report(rep, args.out, per_run_path=args.per_run, trace_dir=args.trace)
    except OSError as exc:
        log.error("%s", exc)
        return 3
    for s in rep.summaries:
        log.info("%-14s rmse %8.3f m  TL %5.1f%%  LT %.4f s  nbar %6.2f", s.scheme, s.rmse_m, s.tl_pct, s.lt_s, s.nbar)
    return 0


if __name__ == "__main__":
    sys.exit(main())
