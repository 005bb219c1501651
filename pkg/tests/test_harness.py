"""Tests for sweep orchestration, slope fitting, and report emission."""

import json

import numpy as np
import pytest

from dynheat.errors import ConfigError
from dynheat.harness import (
    RateReport,
    SweepConfig,
    TIERS,
    default_ladder,
    emit_report,
    fit_loglog,
    run_sweep,
)

STANDARD_LADDER = tuple(0.1 * 2.0 ** -k for k in range(5))
# frozen sweep regressions, standard tier, dim 3
UPPER_SLOPE_5PT = 0.4480618427630065
UPPER_SLOPE_4PT = 0.4408198082366739
DEPS_SLOPE = 0.39316892424417016
LOWER_SLOPE = 0.4513752302848127


def make_report(**overrides):
    base = dict(
        points=((0.1, 0.3), (0.05, 0.2)),
        slope=0.5,
        intercept=0.1,
        residual=0.01,
        validation={"clear": True},
        config={"scenario": "d_eps_scaling"},
        point_meta=({"grid_nodes": 10, "R": 5.0, "dt0": 1e-3},
                    {"grid_nodes": 10, "R": 7.0, "dt0": 1e-3}),
    )
    base.update(overrides)
    return RateReport(**base)


class TestSweepConfig:
    def test_rejects_unknown_scenario_and_tier(self):
        with pytest.raises(ConfigError):
            SweepConfig("bogus", 3, STANDARD_LADDER)
        with pytest.raises(ConfigError):
            SweepConfig("upper_rate", 3, STANDARD_LADDER, tier="huge")

    def test_rejects_short_ladder(self):
        with pytest.raises(ConfigError):
            SweepConfig("upper_rate", 3, (0.1, 0.05, 0.025))

    def test_rejects_narrow_span(self):
        with pytest.raises(ConfigError):
            SweepConfig("upper_rate", 3, (0.1, 0.09, 0.08, 0.07))

    def test_rejects_unordered_ladder(self):
        with pytest.raises(ConfigError):
            SweepConfig("upper_rate", 3, (0.05, 0.1, 0.025, 0.00625))

    def test_rejects_bad_windows(self):
        with pytest.raises(ConfigError):
            SweepConfig("upper_rate", 3, STANDARD_LADDER, K_r=(1.0, 2.0))
        with pytest.raises(ConfigError):
            SweepConfig("upper_rate", 3, STANDARD_LADDER, t_window=(2.0, 1.0))

    def test_normalizes_to_float_tuples(self):
        cfg = SweepConfig("upper_rate", 3, [0.1, 0.05, 0.025, 0.0125, 0.00625])
        assert cfg.epsilons == STANDARD_LADDER
        assert cfg.K_r == (1.5, 2.0)


class TestDefaultLadder:
    def test_tiers_satisfy_config_invariants(self):
        for tier in TIERS:
            ladder = default_ladder(tier)
            SweepConfig("d_eps_scaling", 3, ladder, tier=tier)

    def test_unknown_tier(self):
        with pytest.raises(ConfigError):
            default_ladder("gigantic")


class TestRateReport:
    def test_rejects_nonpositive_points(self):
        with pytest.raises(ConfigError):
            make_report(points=((0.1, 0.0), (0.05, 0.2)))

    def test_rejects_nonfinite_slope(self):
        with pytest.raises(ConfigError):
            make_report(slope=float("nan"))

    def test_json_round_trip_is_identity(self):
        rep = make_report()
        back = RateReport.from_json(rep.to_json())
        assert back == rep
        assert back.to_json() == rep.to_json()

    def test_empty_report_allowed(self):
        rep = RateReport(points=(), slope=0.0, intercept=0.0, residual=0.0)
        assert rep.points == ()


class TestFitLoglog:
    def test_unit_slope(self):
        slope, intercept, residual = fit_loglog([(1.0, 1.0), (10.0, 10.0)])
        assert slope == pytest.approx(1.0, abs=1e-12)
        assert residual < 1e-12

    def test_flat_line(self):
        slope, _, _ = fit_loglog([(1.0, 1.0), (0.01, 1.0)])
        assert slope == pytest.approx(0.0, abs=1e-12)

    def test_constructed_power_law(self):
        pts = [(1.0, 2.0), (0.1, 2.0 * 0.1 ** 0.5), (0.01, 2.0 * 0.01 ** 0.5)]
        slope, intercept, residual = fit_loglog(pts)
        assert slope == pytest.approx(0.5, abs=1e-12)
        assert intercept == pytest.approx(np.log(2.0), abs=1e-12)
        assert residual < 1e-12

    def test_error_paths(self):
        with pytest.raises(ConfigError):
            fit_loglog([(0.1, 1.0)])
        with pytest.raises(ConfigError):
            fit_loglog([(0.1, 1.0), (0.05, -1.0)])
        with pytest.raises(ConfigError):
            fit_loglog([(0.1, 1.0), (0.1, 2.0)])


class TestRunSweep:
    def test_synthetic_power_law_recovered(self):
        pts = [(e, 3.0 * e ** 0.5) for e in STANDARD_LADDER]
        slope, _, residual = fit_loglog(pts)
        assert slope == pytest.approx(0.5, abs=1e-12)
        assert residual < 1e-12

    def test_d_eps_scaling_sweep(self):
        rep = run_sweep(SweepConfig("d_eps_scaling", 3, STANDARD_LADDER))
        assert rep.slope == pytest.approx(DEPS_SLOPE, rel=1e-6)
        assert rep.validation["clear"]
        assert len(rep.points) == 5
        assert len(rep.point_meta) == 5
        assert rep.config["scenario"] == "d_eps_scaling"

    def test_upper_rate_sweep(self):
        # the asymptotic exponent is 1/2 and the fitted slope climbs
        # toward it from below; these are the stable measured values at
        # the standard tier (refinement shifts < 0.03%)
        rep = run_sweep(SweepConfig("upper_rate", 3, STANDARD_LADDER))
        assert rep.slope == pytest.approx(UPPER_SLOPE_5PT, abs=2e-3)
        assert rep.validation["clear"]
        four_pt = fit_loglog(rep.points[:4])[0]
        assert four_pt == pytest.approx(UPPER_SLOPE_4PT, abs=2e-3)
        loo = max(
            abs(fit_loglog(rep.points[:i] + rep.points[i + 1:])[0] - rep.slope)
            for i in range(len(rep.points))
        )
        assert loo < 0.08

    def test_lower_rate_sweep_with_comparison(self):
        ladder = tuple(0.1 * 2.0 ** -k for k in range(6))
        rep = run_sweep(SweepConfig("lower_rate", 3, ladder))
        assert rep.slope == pytest.approx(LOWER_SLOPE, abs=2e-3)
        assert 0.4 <= rep.slope <= 0.6
        assert rep.validation["clear"]
        assert rep.validation["min_comparison_gap"] >= -1e-12
        assert len(rep.validation["comparison_gaps"]) == 6

    def test_picard_xval_sweep(self):
        cfg = SweepConfig("picard_xval", 3, default_ladder("smoke"),
                          t_window=(0.5, 1.0), tier="smoke")
        rep = run_sweep(cfg)
        assert all(v < 0.02 for _, v in rep.points)
        assert len(rep.points) == 4

    def test_deterministic_reports(self):
        cfg = SweepConfig("d_eps_scaling", 3, default_ladder("smoke"), tier="smoke")
        assert run_sweep(cfg).to_json() == run_sweep(cfg).to_json()


class TestEmitReport:
    def test_files_round_trip(self, tmp_path):
        rep = make_report()
        csv_path, json_path = emit_report(rep, tmp_path / "out")
        lines = open(csv_path).read().splitlines()
        assert lines[0] == "epsilon,error,grid_nodes,R,dt0"
        assert len(lines) == 3
        assert lines[1].split(",")[2] == "10"
        back = RateReport.from_json(open(json_path).read())
        assert back == rep

    def test_empty_report_writes_header_only(self, tmp_path):
        rep = RateReport(points=(), slope=0.0, intercept=0.0, residual=0.0)
        csv_path, _ = emit_report(rep, tmp_path / "empty")
        assert open(csv_path).read() == "epsilon,error,grid_nodes,R,dt0\n"

    def test_mismatched_meta_rejected(self, tmp_path):
        rep = make_report(point_meta=({"grid_nodes": 10, "R": 5.0, "dt0": 1e-3},))
        with pytest.raises(ConfigError):
            emit_report(rep, tmp_path / "bad")

    def test_json_parses_as_plain_json(self, tmp_path):
        _, json_path = emit_report(make_report(), tmp_path / "out")
        raw = json.load(open(json_path))
        assert raw["slope"] == 0.5
        assert raw["points"] == [[0.1, 0.3], [0.05, 0.2]]
