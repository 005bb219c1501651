"""Tests for the subsolution and lower-rate machinery."""

import numpy as np
import pytest

from dynheat.dynbc import truncation_radius
from dynheat.errors import ConfigError, SolverError
from dynheat.lower_bound import (
    LowerBoundSpec,
    cutoff_datum,
    decay_certificate,
    decay_profile,
    heat_profile,
    lower_rate_report,
    problem_spec,
    rate_entry,
    subsolution,
    subsolution_snapshots,
)
from dynheat.radial_heat import build_graded_grid, exact_s1_3d

# frozen defaults: dim 3, b = 2, K_r = [1.5, 2], t_window = [1, 2]
CERT_DIM3 = 0.14625655244500993
CERT_DIM3_SINGLE_T5 = 0.17842793646697738
INFIMUM_EPS01 = 0.11693034336002045


@pytest.fixture(scope="module")
def spec3():
    return LowerBoundSpec(3)


def oracle_z(r, t):
    phi = cutoff_datum(LowerBoundSpec(3))
    return exact_s1_3d(lambda rho: float(phi(rho)), r, t, breakpoints=(2.0,))


class TestSpecValidation:
    def test_rejects_low_dimension(self):
        with pytest.raises(ConfigError):
            LowerBoundSpec(2)

    def test_rejects_cutoff_inside_ball(self):
        with pytest.raises(ConfigError):
            LowerBoundSpec(3, b=1.0)

    def test_rejects_window_touching_boundary(self):
        with pytest.raises(ConfigError):
            LowerBoundSpec(3, K_r=(1.0, 2.0))
        with pytest.raises(ConfigError):
            LowerBoundSpec(3, K_r=(1.5, np.inf))

    def test_rejects_bad_time_window(self):
        with pytest.raises(ConfigError):
            LowerBoundSpec(3, t_window=(0.0, 1.0))
        with pytest.raises(ConfigError):
            LowerBoundSpec(3, t_window=(2.0, 1.0))


class TestCutoffDatum:
    def test_vanishes_inside_cutoff(self, spec3):
        phi = cutoff_datum(spec3)
        assert np.all(phi(np.array([1.0, 1.5, 2.0])) == 0.0)

    def test_tail_profile(self):
        phi = cutoff_datum(LowerBoundSpec(4))
        r = np.array([2.5, 4.0])
        assert np.allclose(phi(r), r ** -2.0, rtol=1e-15)

    def test_problem_spec_has_unit_decay_constant(self, spec3):
        prob = problem_spec(spec3, 0.1)
        assert prob.phi_b == 0.0
        assert prob.decay_M == pytest.approx(1.0, rel=1e-12)


class TestHeatProfile:
    def test_rejects_nonpositive_time(self, spec3):
        with pytest.raises(ConfigError):
            heat_profile(spec3, 0.0)

    def test_matches_image_oracle(self, spec3):
        fld = heat_profile(spec3, 10.0)
        num = np.interp(1.5, fld.grid.r, fld.values)
        assert num == pytest.approx(oracle_z(1.5, 10.0), rel=1e-3)

    def test_early_time_vanishes_inside_cutoff(self, spec3):
        fld = heat_profile(spec3, 1e-4)
        assert abs(np.interp(1.5, fld.grid.r, fld.values)) < 1e-20

    def test_nonnegative(self, spec3):
        for t in (1e-4, 1.0, 100.0):
            assert heat_profile(spec3, t).values.min() >= -1e-12


class TestSubsolution:
    def test_unit_epsilon_is_identity(self, spec3):
        fld = heat_profile(spec3, 10.0)
        direct = float(np.interp(1.5, fld.grid.r, fld.values))
        assert subsolution(spec3, 1.0, 1.5, 10.0) == pytest.approx(direct, rel=1e-12)

    def test_rescaled_time_matches_oracle(self, spec3):
        val = subsolution(spec3, 1e-2, 1.5, 1.0)
        assert val == pytest.approx(oracle_z(1.5, 100.0), rel=1e-3)

    def test_rejects_bad_epsilon_and_radius(self, spec3):
        with pytest.raises(ConfigError):
            subsolution(spec3, 1.5, 1.5, 1.0)
        with pytest.raises(ConfigError):
            subsolution(spec3, 0.0, 1.5, 1.0)
        with pytest.raises(ConfigError):
            subsolution(spec3, 0.5, 0.5, 1.0)

    def test_snapshots_preserve_requested_order(self, spec3):
        grid = build_graded_grid(400, 30.0)
        fwd = subsolution_snapshots(spec3, 0.5, [1.0, 2.0], grid)
        rev = subsolution_snapshots(spec3, 0.5, [2.0, 1.0], grid)
        assert np.array_equal(fwd, rev[::-1])

    def test_single_snapshot_equals_profile(self, spec3):
        grid = build_graded_grid(400, 30.0)
        row = subsolution_snapshots(spec3, 1.0, [2.0], grid)[0]
        assert np.array_equal(row, heat_profile(spec3, 2.0, grid=grid).values)

    def test_rejects_empty_or_nonpositive_times(self, spec3):
        grid = build_graded_grid(400, 30.0)
        with pytest.raises(ConfigError):
            subsolution_snapshots(spec3, 0.5, [], grid)
        with pytest.raises(ConfigError):
            subsolution_snapshots(spec3, 0.5, [0.0, 1.0], grid)


class TestDecayCertificate:
    def test_regression_value(self, spec3):
        cert = decay_certificate(spec3, (1.0, 1e3))
        assert cert == pytest.approx(CERT_DIM3, rel=1e-9)

    def test_positive_across_dimensions(self):
        for dim in (4, 5):
            assert decay_certificate(LowerBoundSpec(dim), (1.0, 1e3)) > 0.0

    def test_weighted_profile_plateaus(self, spec3):
        times, prof = decay_profile(spec3, (1.0, 1e3))
        last = prof[times >= 100.0]
        assert last.size >= 5
        assert (last.max() - last.min()) / last.min() < 0.05

    def test_degenerate_window(self, spec3):
        cert = decay_certificate(spec3, (5.0, 5.0))
        assert cert == pytest.approx(CERT_DIM3_SINGLE_T5, rel=1e-9)

    def test_rejects_bad_window(self, spec3):
        with pytest.raises(ConfigError):
            decay_certificate(spec3, (0.0, 10.0))

    def test_unreached_mass_raises_with_sample(self):
        # datum 48 radii away, one tiny step: z underflows to zero on K_r
        far = LowerBoundSpec(3, b=50.0)
        with pytest.raises(SolverError, match="nonpositive"):
            decay_certificate(far, (1e-4, 1e-4))


class TestRateEntry:
    def test_regression_and_meta(self, spec3):
        entry = rate_entry(spec3, 0.1)
        assert entry["infimum"] == pytest.approx(INFIMUM_EPS01, rel=1e-9)
        assert entry["grid_nodes"] == 1500
        assert entry["R"] == pytest.approx(truncation_radius(0.1, 2.0), rel=1e-12)
        assert entry["dt0"] == pytest.approx(1e-4, rel=1e-12)

    def test_solution_dominates_subsolution(self, spec3):
        entry = rate_entry(spec3, 0.1)
        assert entry["comparison_gap"] >= -1e-12

    def test_scaling_constants_comparable(self, spec3):
        # both infima scale like sqrt(eps); the solved problem sits a
        # stable factor ~3.2 above the pinned-boundary profile
        t1, t2 = spec3.t_window
        times = np.linspace(t1, t2, 9)
        grid = build_graded_grid(1500, truncation_radius(0.01, t2))
        entry = rate_entry(spec3, 0.01, grid=grid)
        z_rows = subsolution_snapshots(spec3, 0.01, times, grid)
        mask = (grid.r >= spec3.K_r[0]) & (grid.r <= spec3.K_r[1])
        ratio = entry["infimum"] / z_rows[:, mask].min()
        assert 1.0 <= ratio <= 4.0


class TestLowerRateReport:
    def test_rate_in_dimension_three(self, spec3):
        ladder = [0.1 * 2.0 ** -k for k in range(6)]
        rep = lower_rate_report(spec3, ladder)
        assert 0.4 <= rep.slope <= 0.6
        assert rep.validation["min_comparison_gap"] >= -1e-12
        assert not rep.validation["solver_failures"]
        vals = [v for _, v in rep.points]
        assert np.all(np.diff(vals) < 0)
        pair = np.diff(np.log(vals)) / np.diff(np.log(ladder))
        assert np.all(np.diff(pair) > 0)
        assert np.all(pair < 0.5)

    def test_rate_in_dimension_four(self):
        ladder = [0.1 * 2.0 ** -k for k in range(6)]
        rep = lower_rate_report(LowerBoundSpec(4), ladder)
        assert 0.85 <= rep.slope <= 1.15
        assert rep.validation["min_comparison_gap"] >= -1e-12

    def test_rejects_bad_ladders(self, spec3):
        with pytest.raises(ConfigError):
            lower_rate_report(spec3, [0.01, 0.1, 0.0001, 0.001])
        with pytest.raises(ConfigError):
            lower_rate_report(spec3, [0.1, 0.09, 0.08, 0.07])

    def test_rejects_mismatched_configs(self, spec3):
        ladder = [0.1 * 2.0 ** -k for k in range(6)]
        with pytest.raises(ConfigError):
            lower_rate_report(spec3, ladder, cfgs=[None, None])
