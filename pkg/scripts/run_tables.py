"""Run the four benchmark campaigns and write one summary CSV per table.

    python3 scripts/run_tables.py --runs 200 --out results/

Tables:
  1  clutter 150, n=30, SP 5e-4, NWP 1e-10
  2  clutter 300, n=30, SP 5e-4, NWP 1e-10
  3  clutter 300, n=50, SP 5e-4, NWP 1e-10
  4  clutter 300, n=50, SP 1e-4, NWP 1e-12
"""

import argparse
import logging
import time
from pathlib import Path

from mixtrack.harness import campaign_from_dict, run_campaign, write_report

TABLES = {
    1: dict(clutter_rate=150.0, schemes=["capping-30", "runnalls-5", "runnalls-30", "adaptive-30"]),
    2: dict(clutter_rate=300.0, schemes=["capping-30", "runnalls-5", "runnalls-30", "adaptive-30"]),
    3: dict(clutter_rate=300.0, schemes=["capping-50", "runnalls-5", "runnalls-50", "adaptive-50"]),
    4: dict(clutter_rate=300.0, sp=1e-4, nwp=1e-12,
            schemes=["capping-50", "runnalls-5", "runnalls-50", "adaptive-50"]),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--runs", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--tables", default="1,2,3,4")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("results"))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    for t in (int(x) for x in args.tables.split(",")):
        cfg = campaign_from_dict({**TABLES[t], "runs": args.runs, "base_seed": args.seed})
        t0 = time.perf_counter()
        rep = run_campaign(cfg, workers=args.workers)
        write_report(rep, args.out / f"table{t}.csv", per_run_path=args.out / f"table{t}_runs.csv")
        logging.info("table %d (%.0f s)", t, time.perf_counter() - t0)
        for s in rep.summaries:
            logging.info("  %-12s rmse %7.3f  TL %5.1f%%  LT %.4f s  nbar %6.2f",
                         s.scheme, s.rmse_m, s.tl_pct, s.lt_s, s.nbar)


if __name__ == "__main__":
    main()
