"""Monte Carlo campaigns comparing reduction schemes on the clutter scenario."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from mixtrack.reduction import ReductionPipeline, parse_scheme
from mixtrack.scenario import (
    ScenarioConfig,
    default_scenario_path,
    generate_scans,
    generate_truth,
    load_scenario,
)
from mixtrack.tracker import TrackerConfig, TrackResult, initial_posterior, track

SUMMARY_FIELDS = ["scheme", "rmse_m", "tl_pct", "lt_s", "nbar", "n_runs", "n_lost"]
PER_RUN_FIELDS = ["scheme", "run", "seed", "lost", "rmse_m", "lt_s", "nbar"]
TRACE_FIELDS = ["step", "n_pre", "n_post", "avg_gated", "est_px", "est_py", "true_px", "true_py", "lost"]

DEFAULT_SCHEMES = ("capping-30", "runnalls-5", "runnalls-30", "adaptive-30")


@dataclass(frozen=True)
class CampaignConfig:
    scenario: ScenarioConfig
    schemes: tuple[ReductionPipeline, ...]
    runs: int = 200
    base_seed: int = 0
    filter_q_var: float = 9.0
    filter_r_var: float = 70.0
    p_detect: float = 0.9
    p_gate: float = 0.999
    init_vel_var: float = 100.0

    def __post_init__(self):
        object.__setattr__(self, "schemes", tuple(self.schemes))
        if self.runs < 1:
            raise ValueError(f"need at least one run, got {self.runs}")
        if not self.schemes:
            raise ValueError("need at least one reduction scheme")
        names = [s.name for s in self.schemes]
        if len(set(names)) != len(names):
            raise ValueError(f"scheme names must be unique, got {names}")
        if self.filter_q_var < 0 or self.filter_r_var <= 0:
            raise ValueError("filter noise variances must be positive")
        if not 0 <= self.base_seed < 2**64:
            raise ValueError("base seed must be an unsigned 64-bit integer")
        self.tracker_config(self.schemes[0])

    def tracker_config(self, pipeline: ReductionPipeline) -> TrackerConfig:
        return TrackerConfig.constant_velocity(
            q_var=self.filter_q_var,
            r_var=self.filter_r_var,
            dt=self.scenario.dt,
            p_detect=self.p_detect,
            p_gate=self.p_gate,
            clutter_density=self.scenario.clutter_density,
            pipeline=pipeline,
        )


def campaign_from_dict(data: dict, base_dir: Optional[Path] = None) -> CampaignConfig:
    """Build a campaign from its JSON form.

    ``scenario`` is either an inline scenario object or a path to a scenario
    file (relative to ``base_dir``); it defaults to the bundled scenario.
    """
    data = dict(data)
    known = {"scenario", "schemes", "runs", "base_seed", "filter_q_var", "filter_r_var",
             "p_detect", "p_gate", "init_vel_var", "sp", "nwp", "alpha", "clutter_rate"}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown campaign fields: {sorted(unknown)}")
    scen = data.pop("scenario", None)
    if scen is None:
        scenario = load_scenario(default_scenario_path())
    elif isinstance(scen, str):
        path = Path(scen)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        scenario = load_scenario(path)
    else:
        scenario = ScenarioConfig.from_dict(scen)
    if "clutter_rate" in data:
        scenario = scenario.replace(clutter_rate=float(data.pop("clutter_rate")))
    sp = data.pop("sp", 5e-4)
    nwp = data.pop("nwp", 1e-10)
    alpha = data.pop("alpha", 0.05)
    names = data.pop("schemes", list(DEFAULT_SCHEMES))
    schemes = tuple(parse_scheme(n, sp, nwp, alpha) for n in names)
    data.setdefault("base_seed", scenario.seed)
    return CampaignConfig(scenario=scenario, schemes=schemes, **data)


def load_campaign(path) -> CampaignConfig:
    path = Path(path)
    with open(path) as fh:
        return campaign_from_dict(json.load(fh), base_dir=path.parent)


def position_rmse(estimates, truth) -> float:
    est = np.asarray(estimates, dtype=float)
    tru = np.asarray(truth, dtype=float)
    if est.shape[0] != tru.shape[0]:
        raise ValueError(f"length mismatch: {est.shape[0]} estimates vs {tru.shape[0]} truth states")
    err = est[:, :2] - tru[:, :2]
    return float(np.sqrt(np.mean(np.sum(err * err, axis=1))))


@dataclass
class RunRecord:
    scheme: str
    run: int
    seed: int
    lost: bool
    rmse_m: float
    lt_s: float
    nbar: float


@dataclass
class SchemeSummary:
    scheme: str
    rmse_m: float
    tl_pct: float
    lt_s: float
    nbar: float
    n_runs: int
    n_lost: int


@dataclass
class MonteCarloReport:
    summaries: list[SchemeSummary]
    runs: list[RunRecord] = field(default_factory=list)
    # (scheme, run) -> tracker output, only when traces were requested
    traces: dict = field(default_factory=dict)
    truth: Optional[np.ndarray] = None

    def summary(self, scheme: str) -> SchemeSummary:
        for s in self.summaries:
            if s.scheme == scheme:
                return s
        raise KeyError(scheme)


def _run_one(cfg: CampaignConfig, truth: np.ndarray, run: int, keep_traces: bool):
    scans = generate_scans(truth, cfg.scenario, run=run, base_seed=cfg.base_seed)
    prior0 = initial_posterior(cfg.scenario.x0, cfg.filter_r_var, cfg.init_vel_var)
    seed = (cfg.base_seed ^ run) & ((1 << 64) - 1)
    records, traces = [], {}
    for pipeline in cfg.schemes:
        out = track(prior0, scans, truth[1:], cfg.tracker_config(pipeline))
        records.append(RunRecord(
            pipeline.name, run, seed, out.lost, position_rmse(out.estimates, truth[1:]),
            float(out.seconds.mean()), float(out.n_post.mean()),
        ))
        if keep_traces:
            traces[(pipeline.name, run)] = out
    return records, traces


def _summarize(name: str, records: Sequence[RunRecord]) -> SchemeSummary:
    kept = [r.rmse_m for r in records if not r.lost]
    n_lost = sum(r.lost for r in records)
    return SchemeSummary(
        scheme=name,
        rmse_m=float(np.mean(kept)) if kept else math.nan,
        tl_pct=100.0 * n_lost / len(records),
        lt_s=float(np.mean([r.lt_s for r in records])),
        nbar=float(np.mean([r.nbar for r in records])),
        n_runs=len(records),
        n_lost=n_lost,
    )


def run_campaign(cfg: CampaignConfig, keep_traces: bool = False, workers: int = 1, progress=None) -> MonteCarloReport:
    """Run every scheme on the same scans for runs 0..N-1 and aggregate metrics.

    Runs may be spread over worker processes; results are always reduced in
    run order. RMSE is the mean per-run RMSE over runs that were not lost.
    """
    truth = generate_truth(cfg.scenario)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_one, cfg, truth, r, keep_traces) for r in range(cfg.runs)]
            results = []
            for f in futures:
                results.append(f.result())
                if progress:
                    progress(len(results), cfg.runs)
    else:
        results = []
        for r in range(cfg.runs):
            results.append(_run_one(cfg, truth, r, keep_traces))
            if progress:
                progress(r + 1, cfg.runs)
    runs: list[RunRecord] = []
    traces: dict = {}
    for recs, tr in results:
        runs.extend(recs)
        traces.update(tr)
    by_scheme = {p.name: [r for r in runs if r.scheme == p.name] for p in cfg.schemes}
    summaries = [_summarize(name, recs) for name, recs in by_scheme.items()]
    runs.sort(key=lambda r: ([p.name for p in cfg.schemes].index(r.scheme), r.run))
    return MonteCarloReport(summaries, runs, traces, truth)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path: Path, header: list[str], rows) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def write_report(
    rep: MonteCarloReport,
    path,
    per_run_path=None,
    trace_dir=None,
) -> None:
    """Write the per-scheme summary CSV and, optionally, per-run and per-step CSVs."""
    _write_csv(Path(path), SUMMARY_FIELDS,
               ([getattr(s, f) for f in SUMMARY_FIELDS] for s in rep.summaries))
    if per_run_path is not None:
        _write_csv(Path(per_run_path), PER_RUN_FIELDS,
                   ([getattr(r, f) for f in PER_RUN_FIELDS] for r in rep.runs))
    if trace_dir is not None:
        if not rep.traces:
            raise ValueError("report holds no per-step traces; run the campaign with keep_traces=True")
        for (scheme, run), out in sorted(rep.traces.items(), key=lambda kv: (kv[0][0], kv[0][1])):
            write_trace(out, rep.truth[1:], Path(trace_dir) / f"{scheme}_run{run:04d}.csv")


def write_trace(out: TrackResult, truth: np.ndarray, path) -> None:
    rows = (
        [rec.step, rec.n_pre, rec.n_post, rec.avg_gated, float(rec.estimate[0]), float(rec.estimate[1]),
         float(truth[i, 0]), float(truth[i, 1]), rec.lost]
        for i, rec in enumerate(out.records())
    )
    _write_csv(Path(path), TRACE_FIELDS, rows)


def read_report(path) -> list[SchemeSummary]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != SUMMARY_FIELDS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return [
            SchemeSummary(
                row["scheme"], float(row["rmse_m"]), float(row["tl_pct"]), float(row["lt_s"]),
                float(row["nbar"]), int(row["n_runs"]), int(row["n_lost"]),
            )
            for row in reader
        ]


def read_per_run(path) -> list[RunRecord]:
    with open(path, newline="") as fh:
        return [
            RunRecord(row["scheme"], int(row["run"]), int(row["seed"]), row["lost"] == "1",
                      float(row["rmse_m"]), float(row["lt_s"]), float(row["nbar"]))
            for row in csv.DictReader(fh)
        ]
