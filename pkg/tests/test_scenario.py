import math

import numpy as np
import pytest
from scipy import stats

from mixtrack.scenario import (
    ScenarioConfig,
    cv_matrices,
    default_scenario_path,
    generate_scan,
    generate_scans,
    generate_truth,
    load_scenario,
    save_scenario,
    scan_stream,
)


def kinematics_oracle(x0, segments, k):
    """Chained closed form p(t) = p0 + v0 t + u t^2 / 2 per constant-acceleration segment."""
    p, v = np.array(x0[:2], dtype=float), np.array(x0[2:], dtype=float)
    done = 0
    for first, last, u in segments:
        if done >= k:
            break
        t = min(last, k) - done
        u = np.asarray(u, dtype=float)
        # discrete model applies u over each unit step with the same kinematics
        p = p + v * t + u * t * t / 2.0
        v = v + u * t
        done += t
    return np.concatenate([p, v])


class TestTruth:
    def test_shape_and_start(self):
        cfg = ScenarioConfig()
        truth = generate_truth(cfg)
        assert truth.shape == (101, 4)
        np.testing.assert_array_equal(truth[0], [0, 0, 10, -10])

    @pytest.mark.parametrize("k", [1, 17, 50, 51, 75, 90, 100])
    def test_matches_closed_form(self, k):
        cfg = ScenarioConfig()
        segs = [(s.first, s.last, s.accel) for s in cfg.segments]
        np.testing.assert_allclose(generate_truth(cfg)[k], kinematics_oracle(cfg.x0, segs, k), rtol=1e-12, atol=1e-9)

    def test_segment_end_states(self):
        truth = generate_truth(ScenarioConfig())
        np.testing.assert_allclose(truth[50], [750, 250, 20, 20], atol=1e-9)
        np.testing.assert_allclose(truth[75], [1250, 125, 20, -30], atol=1e-9)
        np.testing.assert_allclose(truth[100], [812.5, -312.5, -55, -5], atol=1e-9)

    def test_default_fov_contains_trajectory(self):
        cfg = load_scenario(default_scenario_path())
        truth = generate_truth(cfg)
        x_min, x_max, y_min, y_max = cfg.fov
        assert x_min < truth[:, 0].min() and truth[:, 0].max() < x_max
        assert y_min < truth[:, 1].min() and truth[:, 1].max() < y_max
        assert cfg.fov_area == pytest.approx(1340 * 700)

    def test_rejects_bad_segments(self):
        with pytest.raises(ValueError):
            ScenarioConfig(segments=[(1, 50, (0, 0)), (52, 100, (0, 0))])
        with pytest.raises(ValueError):
            ScenarioConfig(fov=(0, 0, 0, 1))
        with pytest.raises(ValueError):
            ScenarioConfig(clutter_rate=-1)

    def test_json_round_trip(self, tmp_path):
        cfg = ScenarioConfig(clutter_rate=300.0, seed=12345)
        save_scenario(cfg, tmp_path / "s.json")
        back = load_scenario(tmp_path / "s.json")
        assert back.to_dict() == cfg.to_dict()

    def test_cv_matrices(self):
        F, G, H = cv_matrices(2.0)
        np.testing.assert_array_equal(F @ [1, 2, 3, 4], [7, 10, 3, 4])
        np.testing.assert_array_equal(G @ [1, 1], [2, 2, 2, 2])
        np.testing.assert_array_equal(H @ [1, 2, 3, 4], [1, 2])


class TestScans:
    def test_single_return_without_clutter(self):
        cfg = ScenarioConfig(clutter_rate=0.0, p_detect=1.0)
        truth = generate_truth(cfg)
        scans = generate_scans(truth, cfg, run=5)
        assert [len(s) for s in scans] == [1] * 100
        err = np.array([s.measurements[0] - truth[k + 1, :2] for k, s in enumerate(scans)])
        # noise variance 60 per axis; loose chi-square sanity on 200 values
        assert stats.chi2(200).ppf(1e-4) < np.sum(err**2) / 60.0 < stats.chi2(200).ppf(1 - 1e-4)

    def test_clutter_count_and_detection_rate(self):
        cfg = ScenarioConfig(clutter_rate=150.0)
        truth_k = np.array([600.0, 0.0, 0.0, 0.0])
        n = 10_000
        counts, detected = np.empty(n), np.empty(n, dtype=bool)
        x_min, x_max, y_min, y_max = cfg.fov
        for k in range(n):
            s = generate_scan(truth_k, cfg, scan_stream(99, 0, k))
            counts[k], detected[k] = len(s), s.detected
            clutter = s.measurements
            if s.detected:
                # the target return is the point nearest the truth with overwhelming probability
                near = np.argmin(np.sum((clutter - truth_k[:2]) ** 2, axis=1))
                clutter = np.delete(clutter, near, axis=0)
            assert np.all((clutter[:, 0] > x_min) & (clutter[:, 0] < x_max))
            assert np.all((clutter[:, 1] > y_min) & (clutter[:, 1] < y_max))
        delta = 3 * math.sqrt(150.0 / n)
        assert 150 * 0.99 + 0.9 - delta <= counts.mean() <= 150 * 1.01 + 0.9 + delta
        sd = math.sqrt(0.9 * 0.1 / n)
        assert abs(detected.mean() - 0.9) <= 3 * sd

    def test_determinism(self):
        cfg = ScenarioConfig(clutter_rate=40.0)
        truth = generate_truth(cfg)
        a = generate_scans(truth, cfg, run=7, base_seed=2**63 + 5)
        b = generate_scans(truth, cfg, run=7, base_seed=2**63 + 5)
        c = generate_scans(truth, cfg, run=8, base_seed=2**63 + 5)
        assert all(np.array_equal(x.measurements, y.measurements) for x, y in zip(a, b))
        assert not all(np.array_equal(x.measurements, y.measurements) for x, y in zip(a, c))

    def test_frozen_stream_values(self):
        # regression pin of the documented draw order; generated once, then frozen
        cfg = ScenarioConfig(clutter_rate=3.0)
        s = generate_scan(np.array([100.0, 50.0, 0.0, 0.0]), cfg, scan_stream(0, 0, 1))
        assert len(s) == 3 and s.detected
        np.testing.assert_allclose(s.measurements[0], [1114.0150112721547, 157.71491395386687], rtol=1e-12)
        np.testing.assert_allclose(s.measurements[1], [88.18108881, 40.91110195], rtol=1e-8)
