import json
import math

import numpy as np
import pytest

from mixtrack.cli import main
from mixtrack.harness import (
    SUMMARY_FIELDS,
    CampaignConfig,
    campaign_from_dict,
    load_campaign,
    position_rmse,
    read_per_run,
    read_report,
    run_campaign,
    write_report,
)
from mixtrack.reduction import parse_scheme
from mixtrack.scenario import ScenarioConfig


def small_campaign(**kw):
    data = {"clutter_rate": 20.0, "runs": 3, "schemes": ["capping-10", "runnalls-5", "adaptive-5"]}
    data.update(kw)
    return campaign_from_dict(data)


@pytest.fixture(scope="module")
def small_report():
    return run_campaign(small_campaign(), keep_traces=True)


class TestRMSE:
    def test_zero(self):
        t = np.arange(40.0).reshape(10, 4)
        assert position_rmse(t, t) == 0.0

    def test_constant_offset(self):
        t = np.zeros((10, 4))
        e = t.copy()
        e[:, 0] = 3.0
        e[:, 2] = 100.0  # velocity error is ignored
        assert position_rmse(e, t) == pytest.approx(3.0)

    def test_two_pass_oracle(self, rng):
        e, t = rng.normal(size=(50, 4)) * 10, rng.normal(size=(50, 4)) * 10
        total = 0.0
        for k in range(50):
            total += (e[k, 0] - t[k, 0]) ** 2 + (e[k, 1] - t[k, 1]) ** 2
        assert position_rmse(e, t) == pytest.approx(math.sqrt(total / 50), rel=1e-13)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            position_rmse(np.zeros((3, 4)), np.zeros((4, 4)))


class TestConfig:
    def test_empty_schemes_rejected(self):
        with pytest.raises(ValueError):
            CampaignConfig(ScenarioConfig(), schemes=())
        with pytest.raises(ValueError):
            campaign_from_dict({"schemes": []})

    def test_bad_runs_and_unknown_fields(self):
        with pytest.raises(ValueError):
            small_campaign(runs=0)
        with pytest.raises(ValueError):
            campaign_from_dict({"runz": 3})

    def test_defaults(self):
        cfg = campaign_from_dict({})
        assert [s.name for s in cfg.schemes] == ["capping-30", "runnalls-5", "runnalls-30", "adaptive-30"]
        assert cfg.runs == 200
        assert cfg.schemes[1].sp_threshold == 5e-4 and cfg.schemes[1].nwp_threshold == 1e-10
        tc = cfg.tracker_config(cfg.schemes[0])
        assert tc.p_detect == 0.9 and tc.R[0, 0] == 70.0
        assert cfg.scenario.meas_var == 60.0

    def test_scenario_path_relative_to_file(self, tmp_path):
        (tmp_path / "scen.json").write_text(json.dumps(ScenarioConfig(clutter_rate=7.0).to_dict()))
        (tmp_path / "camp.json").write_text(json.dumps({"scenario": "scen.json", "runs": 2}))
        cfg = load_campaign(tmp_path / "camp.json")
        assert cfg.scenario.clutter_rate == 7.0 and cfg.runs == 2


class TestCampaign:
    def test_summary_invariants(self, small_report):
        for s in small_report.summaries:
            runs = [r for r in small_report.runs if r.scheme == s.scheme]
            assert s.n_runs == 3 == len(runs)
            assert s.tl_pct == pytest.approx(100.0 * s.n_lost / s.n_runs)
            kept = [r.rmse_m for r in runs if not r.lost]
            if kept:
                assert s.rmse_m == pytest.approx(np.mean(kept), rel=1e-15)
            else:
                assert math.isnan(s.rmse_m)
        assert small_report.summary("capping-10").nbar <= 10

    def test_adaptive_floor_bound(self, small_report):
        for (scheme, _), out in small_report.traces.items():
            if scheme.startswith("adaptive"):
                assert np.all(out.n_post <= np.maximum(5, out.n_pre))

    def test_schemes_see_same_scans(self, small_report):
        # per-run gated counts at step 1 depend only on the shared prior and scan
        for run in range(3):
            firsts = {small_report.traces[(s.scheme, run)].avg_gated[0] for s in small_report.summaries}
            assert len(firsts) == 1

    def test_clutter_free_single_run(self):
        cfg = campaign_from_dict({"clutter_rate": 0.0, "runs": 1, "schemes": ["runnalls-5"],
                                  "scenario": ScenarioConfig(p_detect=1.0).to_dict(), "p_detect": 1.0})
        s = run_campaign(cfg).summaries[0]
        assert s.tl_pct == 0.0
        assert math.isfinite(s.rmse_m) and s.rmse_m < 10.0

    def test_workers_agree_with_serial(self, small_report):
        par = run_campaign(small_campaign(), workers=2)
        for a, b in zip(small_report.runs, par.runs):
            assert (a.scheme, a.run, a.lost, a.rmse_m, a.nbar) == (b.scheme, b.run, b.lost, b.rmse_m, b.nbar)


class TestReport:
    def test_csv_round_trip(self, small_report, tmp_path):
        write_report(small_report, tmp_path / "r.csv", per_run_path=tmp_path / "p.csv", trace_dir=tmp_path / "tr")
        lines = (tmp_path / "r.csv").read_text().splitlines()
        assert lines[0] == ",".join(SUMMARY_FIELDS)
        back = read_report(tmp_path / "r.csv")
        for a, b in zip(small_report.summaries, back):
            assert a.scheme == b.scheme and a.n_runs == b.n_runs and a.n_lost == b.n_lost
            for f in ("tl_pct", "lt_s", "nbar"):
                assert getattr(a, f) == getattr(b, f)
            assert a.rmse_m == b.rmse_m or (math.isnan(a.rmse_m) and math.isnan(b.rmse_m))
        per_run = read_per_run(tmp_path / "p.csv")
        assert len(per_run) == 9
        for s in back:
            kept = [r.rmse_m for r in per_run if r.scheme == s.scheme and not r.lost]
            if kept:
                assert s.rmse_m == pytest.approx(np.mean(kept), rel=1e-15)
        traces = sorted((tmp_path / "tr").iterdir())
        assert len(traces) == 9
        assert len(traces[0].read_text().splitlines()) == 101

    def test_single_scheme_two_lines(self, tmp_path):
        cfg = small_campaign(runs=1, schemes=["runnalls-5"])
        write_report(run_campaign(cfg), tmp_path / "one.csv")
        assert len((tmp_path / "one.csv").read_text().splitlines()) == 2

    def test_io_error_has_path(self, small_report, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        with pytest.raises(OSError, match="file"):
            write_report(small_report, blocker / "r.csv")


def strip_lt(text):
    rows = [line.split(",") for line in text.splitlines()]
    col = rows[0].index("lt_s")
    return [r[:col] + r[col + 1:] for r in rows]


class TestCLI:
    def test_deterministic_outputs(self, tmp_path):
        args = ["--clutter-rate", "30", "--runs", "2", "--schemes", "capping-10,adaptive-10", "-q"]
        for tag in ("a", "b"):
            assert main(args + ["--out", str(tmp_path / f"{tag}.csv"), "--per-run", str(tmp_path / f"{tag}_runs.csv")]) == 0
        for name in ("{}.csv", "{}_runs.csv"):
            a = (tmp_path / name.format("a")).read_text()
            b = (tmp_path / name.format("b")).read_text()
            assert strip_lt(a) == strip_lt(b)

    def test_config_error_exit_code(self, tmp_path):
        assert main(["--runs", "0", "--out", str(tmp_path / "x.csv"), "-q"]) == 2
        assert main(["--schemes", "bogus-3", "--out", str(tmp_path / "x.csv"), "-q"]) == 2
        assert main(["--config", str(tmp_path / "missing.json"), "-q"]) == 2

    def test_io_error_exit_code(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        assert main(["--runs", "1", "--schemes", "capping-5", "--clutter-rate", "5",
                     "--out", str(blocker / "x.csv"), "-q"]) == 3

    def test_config_file(self, tmp_path):
        (tmp_path / "c.json").write_text(json.dumps({"runs": 1, "schemes": ["runnalls-3"], "clutter_rate": 10}))
        assert main(["--config", str(tmp_path / "c.json"), "--seed", "9", "--out", str(tmp_path / "r.csv"), "-q"]) == 0
        assert read_report(tmp_path / "r.csv")[0].scheme == "runnalls-3"
