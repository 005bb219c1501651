"""Quadrature checks for the auxiliary estimates behind the solver.

Four independent verifications:

  * h_weight: the short-time weight max(1, t^{-1/2}) used by the kernel
    bounds.
  * convolution_sup / find_damping_L: the exponentially weighted
    supremum sup_{0<t<T} t^gamma int_0^t e^{-L(t-s)} s^{-a} (t-s)^{-b} ds
    decays as the weight L grows; the search doubles L until the sup
    drops below the requested delta.
  * f2_bound_check: the reconstructed forcing from a fixed-point run
    stays inside the envelope
    (t/eps)^{-1/2} e^{Lt} r^{2-dim} (1 + r (t/(r-1))^beta) ||v||_X;
    only shape stability of the ratio is asserted, never the constant.
  * supnorm_decay_exponent: the Dirichlet evolution of r^{-gamma} loses
    sup norm like t^{-gamma/2} at long times.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from dynheat.errors import ConfigError, NonConvergenceError, SolverError
from dynheat.picard import PicardConfig, f2_radial, resolve_alpha, x_norm
from dynheat.radial_heat import (
    build_graded_grid,
    evolve_s1_snapshots,
    field_from_function,
    HeatStepperConfig,
)

SUP_GRID_POINTS = 200
SUP_GRID_SPAN = 1e-4
L_PROBE_CAP = 2 ** 20
DECAY_GRID_NODES = 2000


def h_weight(t: float) -> float:
    """Kernel-bound weight max(1, t^{-1/2})."""
    if t <= 0:
        raise ConfigError(f"time must be positive, got {t}")
    return max(1.0, t ** -0.5)


@dataclass(frozen=True)
class ConvolutionSupParams:
    """Singularity exponents and window of the weighted-sup check.

    a and b are the endpoint singularities of the convolution kernel
    s^{-a} (t-s)^{-b} and must satisfy a + b < 1 strictly; gamma is the
    polynomial time weight; delta the decay target for the L search.
    """

    a: float
    b: float
    gamma: float
    T: float
    delta: float

    def __post_init__(self):
        if not (0.0 <= self.a < 1.0 and 0.0 <= self.b < 1.0):
            raise ConfigError(f"exponents must lie in [0, 1), got a={self.a}, b={self.b}")
        if self.a + self.b >= 1.0:
            raise ConfigError(f"need a + b < 1, got {self.a + self.b}")
        if self.gamma < 0:
            raise ConfigError(f"gamma must be >= 0, got {self.gamma}")
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ConfigError(f"T must be positive and finite, got {self.T}")
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise ConfigError(f"delta must be positive and finite, got {self.delta}")


def _weighted_integral(t: float, params: ConvolutionSupParams, L: float) -> float:
    # e^{-Lt} e^{Ls} folded into the integrand to avoid overflow at
    # large L; the algebraic endpoint weights go to QUADPACK directly
    out = quad(
        lambda s: math.exp(-L * (t - s)),
        0.0,
        t,
        weight="alg",
        wvar=(-params.a, -params.b),
        limit=200,
        full_output=1,
    )
    if len(out) > 3:
        raise SolverError(f"quadrature did not converge at t={t}, L={L}: {out[3]}")
    return out[0]


def convolution_sup(params: ConvolutionSupParams, L: float) -> float:
    """Sup over a 200-point log grid in (0, T] of the weighted integral."""
    if L <= 0:
        raise ConfigError(f"weight must be positive, got {L}")
    times = np.geomspace(params.T * SUP_GRID_SPAN, params.T, SUP_GRID_POINTS)
    return max(
        t ** params.gamma * _weighted_integral(t, params, L) for t in times
    )


def find_damping_L(params: ConvolutionSupParams) -> float:
    """Smallest probed doubling weight with convolution_sup <= delta.

    Probes L = 1, 2, 4, ... and spot-checks that the sup at twice the
    returned weight also satisfies the target.
    """
    history = []
    L = 1.0
    while L <= L_PROBE_CAP:
        val = convolution_sup(params, L)
        history.append((L, val))
        if val <= params.delta:
            confirm = convolution_sup(params, 2.0 * L)
            if confirm > params.delta:
                raise SolverError(
                    f"sup rebounded: {val:.3e} at L={L:g} but "
                    f"{confirm:.3e} at L={2 * L:g}"
                )
            return L
        L *= 2.0
    raise NonConvergenceError(
        f"no weight below {L_PROBE_CAP} reaches delta={params.delta}",
        {"history": history},
    )


def f2_bound_check(pair, beta: float, L: float, samples: int = 24, *,
                   alpha=None) -> dict:
    """Max ratio of |forcing| to its envelope over a sample lattice.

    pair is a solved fixed-point state; the envelope is
    (t/eps)^{-1/2} e^{Lt} r^{2-dim} (1 + r (t/(r-1))^beta) ||v||_X.
    beta must respect the dimension window: (0, 1/4) for dim 3,
    (0, min((alpha-1)/dim, 2-alpha)) above.  A max that stays put when
    samples are refined certifies the envelope shape.
    """
    dim = pair.meta["dim"]
    epsilon = pair.meta["epsilon"]
    alpha = resolve_alpha(dim, alpha)
    beta_hi = 0.25 if dim == 3 else min((alpha - 1.0) / dim, 2.0 - alpha)
    if not 0.0 < beta < beta_hi:
        raise ConfigError(f"beta must lie in (0, {beta_hi:g}) for dim {dim}, got {beta}")
    if samples < 2:
        raise ConfigError(f"need at least 2 samples per axis, got {samples}")
    T = float(pair.v.times[-1])
    cfg = PicardConfig(T=T, L=float(L))
    vnorm = x_norm(pair.v, cfg, epsilon, dim)
    base = {"beta": beta, "L": float(L), "samples": samples}
    if vnorm == 0.0:
        return {**base, "max_ratio": 0.0, "radius": None, "time": None}
    times = np.geomspace(T / 200.0, T, samples)
    radii = 1.0 + np.geomspace(1e-3, pair.v.grid.R - 1.0, samples)
    best = (0.0, radii[0], times[0])
    for t in times:
        scale = (t / epsilon) ** -0.5 * math.exp(L * t) * vnorm
        for r in radii:
            env = scale * r ** (2.0 - dim) * (1.0 + r * (t / (r - 1.0)) ** beta)
            ratio = abs(f2_radial(pair.g, r, t, dim=dim)) / env
            if ratio > best[0]:
                best = (ratio, r, t)
    return {**base, "max_ratio": best[0], "radius": best[1], "time": best[2]}


def supnorm_decay_exponent(gamma: float, *, dim: int = 3,
                           t_range=(10.0, 1e3), n_times: int = 12,
                           grid=None, cfg=None) -> float:
    """Fitted log-log slope of sup |S1(t) r^{-gamma}| over t_range."""
    if gamma <= 0:
        raise ConfigError(f"gamma must be positive, got {gamma}")
    t1, t2 = t_range
    if not 0.0 < t1 < t2:
        raise ConfigError(f"need 0 < t1 < t2, got {t_range}")
    cfg = cfg or HeatStepperConfig(dt_initial=1e-3, dt_growth=1.1)
    grid = grid or build_graded_grid(DECAY_GRID_NODES, 1.0 + 8.0 * math.sqrt(t2))
    phi = field_from_function(grid, lambda r: r ** -gamma)
    times = np.geomspace(t1, t2, n_times)
    rows = evolve_s1_snapshots(phi, list(times), cfg, dim=dim)
    sups = np.abs(rows).max(axis=1)
    slope = np.polyfit(np.log(times), np.log(sups), 1)[0]
    return float(slope)
