"""Tests for the coupled interior/boundary solver."""

import math

import numpy as np
import pytest

from dynheat.dynbc import (
    DynBCState,
    ProblemSpec,
    Trajectory,
    default_stepper,
    error_vs_limit,
    solve_dynbc,
    truncation_radius,
)
from dynheat.errors import ConfigError
from dynheat.radial_heat import HeatStepperConfig, RadialField, build_graded_grid

# reference run: N=3, phi=1/r, phi_b=1, eps=0.1, 2000 nodes,
# R=1+8*sqrt(2/eps), 9 window samples (frozen from a validated build)
REGRESSION_ERROR_EPS01 = 0.130869240705287
REGRESSION_UB_T2 = 0.26375508813037


def inverse_datum(r):
    return 1.0 / r


class TestProblemSpec:
    def test_valid_spec_records_decay_constant(self):
        spec = ProblemSpec(dim=3, epsilon=0.1, phi=inverse_datum, phi_b=1.0)
        assert math.isclose(spec.decay_M, 1.0, rel_tol=1e-12)

    def test_cutoff_datum_decay_constant(self):
        spec = ProblemSpec(
            dim=3,
            epsilon=0.1,
            phi=lambda r: np.where(r > 2.0, 1.0 / r, 0.0),
            phi_b=0.0,
        )
        assert math.isclose(spec.decay_M, 1.0, rel_tol=1e-12)

    @pytest.mark.parametrize("eps", [0.0, 1.0, -0.5, 1.5])
    def test_rejects_epsilon_outside_unit_interval(self, eps):
        with pytest.raises(ConfigError):
            ProblemSpec(dim=3, epsilon=eps, phi=inverse_datum, phi_b=1.0)

    def test_rejects_low_dimension(self):
        with pytest.raises(ConfigError):
            ProblemSpec(dim=2, epsilon=0.1, phi=inverse_datum, phi_b=1.0)

    def test_rejects_nondecaying_datum(self):
        # constant phi has unbounded r^(N-2) phi
        with pytest.raises(ConfigError):
            ProblemSpec(dim=3, epsilon=0.1, phi=lambda r: np.ones_like(r), phi_b=0.0)

    def test_rejects_nonfinite_datum(self):
        with pytest.raises(ConfigError), np.errstate(divide="ignore"):
            ProblemSpec(
                dim=3, epsilon=0.1, phi=lambda r: 1.0 / (r - 1.0), phi_b=0.0
            )


class TestStateAndTrajectory:
    def test_state_trace_invariant(self):
        grid = build_graded_grid(100, R=20.0)
        vals = 1.0 / grid.r
        state = DynBCState(
            interior=RadialField(grid, vals), boundary_value=1.0, time=0.0
        )
        assert state.boundary_value == 1.0
        with pytest.raises(ValueError):
            DynBCState(
                interior=RadialField(grid, vals), boundary_value=0.5, time=0.0
            )

    def test_trajectory_time_lookup(self):
        grid = build_graded_grid(100, R=20.0)
        spec = ProblemSpec(dim=3, epsilon=0.1, phi=inverse_datum, phi_b=1.0)
        traj = solve_dynbc(spec, 1.0, [0.5, 1.0], grid)
        assert traj.state_at(0.5).time == 0.5
        with pytest.raises(KeyError):
            traj.state_at(0.7)


class TestSolveBasics:
    def test_zero_data_stay_zero(self):
        grid = build_graded_grid(400, R=25.0)
        spec = ProblemSpec(dim=3, epsilon=0.1, phi=lambda r: 0.0 * r, phi_b=0.0)
        traj = solve_dynbc(spec, 1.0, [0.25, 1.0], grid)
        for state in traj.states:
            assert np.all(state.interior.values == 0.0)

    def test_rejects_bad_horizon_and_samples(self):
        grid = build_graded_grid(400, R=25.0)
        spec = ProblemSpec(dim=3, epsilon=0.1, phi=inverse_datum, phi_b=1.0)
        with pytest.raises(ConfigError):
            solve_dynbc(spec, 0.0, [0.5], grid)
        with pytest.raises(ConfigError):
            solve_dynbc(spec, 1.0, [], grid)
        with pytest.raises(ConfigError):
            solve_dynbc(spec, 1.0, [2.0], grid)
        with pytest.raises(ConfigError):
            solve_dynbc(spec, 1.0, [0.5], grid, time_scale="slow")

    def test_boundary_law_residual_is_roundoff(self):
        grid = build_graded_grid(1000, R=30.0)
        spec = ProblemSpec(dim=3, epsilon=0.05, phi=inverse_datum, phi_b=1.0)
        traj = solve_dynbc(spec, 1.0, [1.0], grid)
        assert traj.boundary_residual_max < 1e-8

    def test_truncation_radius_policy(self):
        assert math.isclose(truncation_radius(0.01, 1.0), 81.0)
        assert truncation_radius(1e-9, 10.0) == 1e4


class TestAgainstLimit:
    def test_small_epsilon_approaches_limit_value(self):
        # at eps=1e-3 the solution at (r,t)=(2,1) sits near the limit
        # value e^{-1}/2, within the first-order eps^{1/2} correction
        eps = 1e-3
        spec = ProblemSpec(dim=3, epsilon=eps, phi=inverse_datum, phi_b=1.0)
        grid = build_graded_grid(2000, R=truncation_radius(eps, 1.0))
        traj = solve_dynbc(spec, 1.0, [1.0], grid)
        num = np.interp(2.0, grid.r, traj.states[-1].interior.values)
        assert abs(num - math.exp(-1.0) / 2.0) < 0.05

    def test_error_vs_limit_monotone_ladder(self):
        errors = []
        for eps in (0.1, 0.05, 0.025, 0.0125):
            spec = ProblemSpec(dim=3, epsilon=eps, phi=inverse_datum, phi_b=1.0)
            grid = build_graded_grid(1500, R=truncation_radius(eps, 2.0))
            traj = solve_dynbc(spec, 2.0, np.linspace(1.0, 2.0, 5), grid)
            errors.append(error_vs_limit(traj, spec, (1.5, 2.0), (1.0, 2.0)))
        for coarse, fine in zip(errors, errors[1:]):
            assert fine < coarse * 1.05

    def test_error_vs_limit_zero_boundary_datum(self):
        grid = build_graded_grid(600, R=25.0)
        spec = ProblemSpec(
            dim=3,
            epsilon=0.1,
            phi=lambda r: np.where(r > 2.0, 1.0 / r, 0.0),
            phi_b=0.0,
        )
        traj = solve_dynbc(spec, 1.0, [0.5, 1.0], grid)
        err = error_vs_limit(traj, spec, (1.5, 2.0), (0.5, 1.0))
        mask = (grid.r >= 1.5) & (grid.r <= 2.0)
        sup_u = max(
            np.abs(s.interior.values[mask]).max() for s in traj.states[-2:]
        )
        assert math.isclose(err, sup_u, rel_tol=1e-12)

    def test_error_vs_limit_rejects_empty_windows(self):
        grid = build_graded_grid(400, R=25.0)
        spec = ProblemSpec(dim=3, epsilon=0.1, phi=inverse_datum, phi_b=1.0)
        traj = solve_dynbc(spec, 1.0, [0.5, 1.0], grid)
        with pytest.raises(ConfigError):
            error_vs_limit(traj, spec, (1.5, 2.0), (0.1, 0.2))
        with pytest.raises(ConfigError):
            error_vs_limit(traj, spec, (26.0, 27.0), (0.5, 1.0))


class TestScalingEquivalence:
    def test_physical_and_fast_forms_agree(self):
        # same problem integrated in t and in tau = t/eps: when the
        # step sequences correspond the linear systems are identical up
        # to row scaling, so the trajectories match to solver roundoff
        eps = 0.05
        spec = ProblemSpec(dim=3, epsilon=eps, phi=inverse_datum, phi_b=1.0)
        grid = build_graded_grid(800, R=truncation_radius(eps, 0.5))
        tp = solve_dynbc(
            spec, 0.5, [0.25, 0.5], grid, default_stepper(eps, "physical"),
            "physical",
        )
        tf = solve_dynbc(
            spec, 0.5, [0.25, 0.5], grid, default_stepper(eps, "fast"), "fast"
        )
        for sp, sf in zip(tp.states, tf.states):
            assert np.allclose(sp.interior.values, sf.interior.values, atol=1e-10)

    def test_default_stepper_resolves_initial_layer(self):
        cfg = default_stepper(0.01, "physical")
        assert math.isclose(cfg.dt_initial, 1e-5)
        cfg = default_stepper(0.01, "fast")
        assert math.isclose(cfg.dt_initial, 1e-3)


class TestRegression:
    def test_window_error_snapshot(self):
        eps = 0.1
        spec = ProblemSpec(dim=3, epsilon=eps, phi=inverse_datum, phi_b=1.0)
        grid = build_graded_grid(2000, R=truncation_radius(eps, 2.0))
        traj = solve_dynbc(spec, 2.0, np.linspace(1.0, 2.0, 9), grid)
        err = error_vs_limit(traj, spec, (1.5, 2.0), (1.0, 2.0))
        assert math.isclose(err, REGRESSION_ERROR_EPS01, rel_tol=1e-7)
        assert math.isclose(
            traj.states[-1].boundary_value, REGRESSION_UB_T2, rel_tol=1e-7
        )
