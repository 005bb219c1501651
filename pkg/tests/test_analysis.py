"""Tests for the quadrature-based estimate checks."""

import numpy as np
import pytest

from dynheat.analysis import (
    ConvolutionSupParams,
    convolution_sup,
    f2_bound_check,
    find_damping_L,
    h_weight,
    supnorm_decay_exponent,
)
from dynheat.dynbc import ProblemSpec
from dynheat.errors import ConfigError
from dynheat.picard import PicardConfig, picard_solve

# frozen from the doubling search at a = b = 1/4, gamma = 1, T = 1
L_STAR_QUARTER = 32.0
SUP_AT_L_STAR = 0.0916328562741006
ENVELOPE_RATIO = 0.11577634632757501


@pytest.fixture(scope="module")
def quarter_params():
    return ConvolutionSupParams(0.25, 0.25, 1.0, 1.0, 0.1)


@pytest.fixture(scope="module")
def solved_pair():
    spec = ProblemSpec(3, 0.1, lambda r: 1.0 / r, 1.0)
    return picard_solve(spec, PicardConfig(T=1.0))


class TestHWeight:
    def test_crossover_and_branches(self):
        assert h_weight(1.0) == 1.0
        assert h_weight(4.0) == 1.0
        assert h_weight(0.25) == 2.0

    def test_rejects_nonpositive_time(self):
        with pytest.raises(ConfigError):
            h_weight(0.0)


class TestParams:
    def test_rejects_supercritical_exponents(self):
        with pytest.raises(ConfigError):
            ConvolutionSupParams(0.6, 0.5, 0.0, 1.0, 0.1)
        with pytest.raises(ConfigError):
            ConvolutionSupParams(1.0, 0.0, 0.0, 1.0, 0.1)

    def test_rejects_bad_weights_and_window(self):
        with pytest.raises(ConfigError):
            ConvolutionSupParams(0.25, 0.25, -1.0, 1.0, 0.1)
        with pytest.raises(ConfigError):
            ConvolutionSupParams(0.25, 0.25, 1.0, 0.0, 0.1)
        with pytest.raises(ConfigError):
            ConvolutionSupParams(0.25, 0.25, 1.0, 1.0, 0.0)


class TestConvolutionSup:
    def test_closed_form(self):
        p = ConvolutionSupParams(0.0, 0.0, 0.0, 1.0, 0.1)
        # integrand collapses to int_0^t e^{-(t-s)} ds = 1 - e^{-t},
        # increasing, so the sup sits at t = T = 1
        assert convolution_sup(p, 1.0) == pytest.approx(1.0 - np.exp(-1.0), rel=1e-10)

    def test_decays_in_weight(self, quarter_params):
        assert convolution_sup(quarter_params, 1.0) > convolution_sup(quarter_params, 64.0)

    def test_polynomial_weight_inequality(self):
        flat = ConvolutionSupParams(0.25, 0.25, 0.0, 1.0, 0.1)
        cubed = ConvolutionSupParams(0.25, 0.25, 3.0, 1.0, 0.1)
        assert convolution_sup(cubed, 1.0) <= convolution_sup(flat, 1.0) * (1 + 1e-12)

    def test_regression_value(self, quarter_params):
        assert convolution_sup(quarter_params, L_STAR_QUARTER) == pytest.approx(
            SUP_AT_L_STAR, rel=1e-9
        )

    def test_rejects_nonpositive_weight(self, quarter_params):
        with pytest.raises(ConfigError):
            convolution_sup(quarter_params, 0.0)


class TestFindDampingL:
    def test_reaches_target(self, quarter_params):
        L = find_damping_L(quarter_params)
        assert L == L_STAR_QUARTER
        assert convolution_sup(quarter_params, L) <= quarter_params.delta

    def test_probe_sequence_nonincreasing(self, quarter_params):
        Ls = [2.0 ** k for k in range(6)]
        vals = [convolution_sup(quarter_params, L) for L in Ls]
        assert all(b <= a + 1e-10 for a, b in zip(vals, vals[1:]))

    def test_loose_target_returns_unit_weight(self):
        p = ConvolutionSupParams(0.25, 0.25, 1.0, 1.0, 1e3)
        assert find_damping_L(p) == 1.0

    def test_tighter_target_needs_larger_weight(self, quarter_params):
        tight = ConvolutionSupParams(0.25, 0.25, 1.0, 1.0, 0.01)
        assert find_damping_L(tight) >= find_damping_L(quarter_params)

    def test_deterministic(self, quarter_params):
        assert find_damping_L(quarter_params) == find_damping_L(quarter_params)


class TestF2BoundCheck:
    def test_ratio_finite_and_stable(self, solved_pair):
        rep = f2_bound_check(solved_pair, 0.2, 1.0, samples=24)
        assert rep["max_ratio"] == pytest.approx(ENVELOPE_RATIO, rel=1e-6)
        refined = f2_bound_check(solved_pair, 0.2, 1.0, samples=48)
        change = abs(refined["max_ratio"] - rep["max_ratio"]) / rep["max_ratio"]
        assert change < 0.10

    def test_zero_run_gives_zero_ratio(self):
        spec = ProblemSpec(3, 0.1, lambda r: np.zeros_like(np.asarray(r, float)), 0.0)
        pair = picard_solve(spec, PicardConfig(T=0.5, L=1.0))
        assert f2_bound_check(pair, 0.2, 1.0)["max_ratio"] == 0.0

    def test_rejects_beta_outside_window(self, solved_pair):
        with pytest.raises(ConfigError):
            f2_bound_check(solved_pair, 0.3, 1.0)
        with pytest.raises(ConfigError):
            f2_bound_check(solved_pair, 0.0, 1.0)

    def test_rejects_degenerate_lattice(self, solved_pair):
        with pytest.raises(ConfigError):
            f2_bound_check(solved_pair, 0.2, 1.0, samples=1)


class TestSupnormDecay:
    def test_inverse_datum(self):
        assert supnorm_decay_exponent(1.0) == pytest.approx(-0.5, abs=0.15)

    def test_inverse_square_datum(self):
        assert supnorm_decay_exponent(2.0) == pytest.approx(-1.0, abs=0.15)

    def test_rejects_bad_arguments(self):
        with pytest.raises(ConfigError):
            supnorm_decay_exponent(0.0)
        with pytest.raises(ConfigError):
            supnorm_decay_exponent(1.0, t_range=(10.0, 10.0))
