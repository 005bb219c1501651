"""Direct solver for slow diffusion coupled to a boundary derivative law.

Integrates eps u_t = u_rr + ((N-1)/r) u_r on (1, R) together with the
boundary ordinary differential equation u_b'(t) = d/dr u(1, t), where
the trace u(1, t) = u_b(t) is itself an unknown.  The sign convention
follows from the outward normal of the exterior domain pointing toward
the origin: with constant data the solution must relax like
e^{-(N-2)t} r^{-(N-2)}, and c(t) r^{-(N-2)} satisfies c' = -(N-2)c
precisely when the boundary law reads u_b' = +d/dr u(1, t).

Each implicit step solves one banded system containing the interior
rows and the boundary row; the boundary unknown is never lagged, so
the discrete boundary law holds to solver roundoff at every step.

The same code path integrates the fast-time form u_tau = Lu with
u_b' = eps * d/dr u(1, tau) on the horizon T/eps (time_scale="fast");
the two scalings produce bitwise-comparable trajectories when the
step sequences correspond, which the tests exploit as a consistency
check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import solve_banded

from .errors import ConfigError, SolverError
from .limit_semigroup import limit_profile
from .radial_heat import (
    HeatStepperConfig,
    RadialField,
    RadialGrid,
    boundary_gradient_coefficients,
    laplacian_coefficients,
)

TIME_SCALES = ("physical", "fast")

# probe used to validate the decay constant sup r^{N-2}|phi(r)| at
# construction: log-spaced radii, tail growth beyond this factor over
# the bulk maximum marks the supremum as unattained
_PROBE_RADII = np.geomspace(1.0, 1e6, 2048)
_TAIL_GROWTH_FACTOR = 1.25


@dataclass(frozen=True)
class ProblemSpec:
    dim: int
    epsilon: float
    phi: Callable
    phi_b: float
    decay_M: float = field(init=False)

    def __post_init__(self):
        if self.dim < 3:
            raise ConfigError(f"dimension must be >= 3, got {self.dim}")
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigError(f"epsilon must lie in (0,1), got {self.epsilon}")
        if not math.isfinite(self.phi_b):
            raise ConfigError("phi_b must be finite")
        object.__setattr__(self, "decay_M", self._validate_decay())

    def _validate_decay(self) -> float:
        weighted = _PROBE_RADII ** (self.dim - 2.0) * np.abs(
            self._sample(_PROBE_RADII)
        )
        if not np.all(np.isfinite(weighted)):
            raise ConfigError("r^(N-2) phi(r) is not finite on the probe radii")
        bulk = weighted[: -len(weighted) // 10].max()
        tail = weighted[-len(weighted) // 10 :].max()
        if tail > _TAIL_GROWTH_FACTOR * max(bulk, 1e-300):
            raise ConfigError(
                "r^(N-2) phi(r) grows at large r; decay constant unattained"
            )
        return float(weighted.max())

    def _sample(self, r: np.ndarray) -> np.ndarray:
        try:
            vals = np.asarray(self.phi(r), dtype=float)
            if vals.shape == r.shape:
                return vals
        except (TypeError, ValueError):
            pass
        return np.array([float(self.phi(ri)) for ri in r])

    def initial_vector(self, grid: RadialGrid) -> np.ndarray:
        u0 = self._sample(grid.r)
        u0[0] = self.phi_b
        return u0


@dataclass(frozen=True)
class DynBCState:
    interior: RadialField
    boundary_value: float
    time: float

    def __post_init__(self):
        if self.interior.values[0] != self.boundary_value:
            raise ValueError("trace node must equal the boundary unknown")


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray  # physical times, increasing
    states: tuple
    boundary_residual_max: float
    meta: dict

    def __post_init__(self):
        if len(self.states) != self.times.size:
            raise ValueError("one state per sample time")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("sample times must increase strictly")

    def state_at(self, t: float) -> DynBCState:
        idx = int(np.argmin(np.abs(self.times - t)))
        if not math.isclose(self.times[idx], t, rel_tol=1e-12, abs_tol=1e-15):
            raise KeyError(f"time {t} was not sampled")
        return self.states[idx]


def default_stepper(epsilon: float, time_scale: str = "physical") -> HeatStepperConfig:
    """Step policy resolving the O(eps) initial layer of the slow form."""
    dt0 = 1e-3 * epsilon if time_scale == "physical" else 1e-3
    return HeatStepperConfig(dt_initial=dt0, dt_growth=1.05)


def truncation_radius(epsilon: float, t_max: float, cap: float = 1e4) -> float:
    """Default R = 1 + 8 sqrt(t_max/eps): diffusion length in fast time."""
    return min(1.0 + 8.0 * math.sqrt(t_max / epsilon), cap)


class _CoupledStepper:
    """One theta step of the interior/boundary system, bandwidth (1,2)."""

    def __init__(self, grid: RadialGrid, dim: int, a_int: float, a_bc: float,
                 far_value: float):
        self.lo, self.di, self.up = laplacian_coefficients(grid, dim)
        self.c = boundary_gradient_coefficients(grid)
        self.a_int = a_int
        self.a_bc = a_bc
        self.far_value = far_value
        self.n = grid.n

    def _flux(self, u: np.ndarray) -> float:
        return float(self.c @ u[:3])

    def step(self, u: np.ndarray, dt: float, theta: float) -> np.ndarray:
        n = self.n
        rhs = np.empty(n)
        rhs[1:-1] = self.a_int * u[1:-1] + (1.0 - theta) * dt * (
            self.lo * u[:-2] + self.di * u[1:-1] + self.up * u[2:]
        )
        rhs[0] = u[0] + (1.0 - theta) * dt * self.a_bc * self._flux(u)
        rhs[-1] = self.far_value

        ab = np.zeros((4, n))
        # second superdiagonal: only the boundary row reaches it
        ab[0, 2] = -theta * dt * self.a_bc * self.c[2]
        # first superdiagonal
        ab[1, 1] = -theta * dt * self.a_bc * self.c[1]
        ab[1, 2:] = -theta * dt * self.up
        # diagonal
        ab[2, 0] = 1.0 - theta * dt * self.a_bc * self.c[0]
        ab[2, 1:-1] = self.a_int - theta * dt * self.di
        ab[2, -1] = 1.0
        # subdiagonal; far row is a frozen identity
        ab[3, :-2] = -theta * dt * self.lo
        ab[3, -2] = 0.0
        return solve_banded((1, 2), ab, rhs)

    def law_residual(self, u_old, u_new, dt, theta) -> float:
        rate = (u_new[0] - u_old[0]) / dt
        flux = theta * self._flux(u_new) + (1.0 - theta) * self._flux(u_old)
        return abs(rate - self.a_bc * flux)


def solve_dynbc(
    spec: ProblemSpec,
    horizon: float,
    sample_times,
    grid: RadialGrid,
    cfg: Optional[HeatStepperConfig] = None,
    time_scale: str = "physical",
) -> Trajectory:
    """Integrate the coupled problem, sampling at the requested times.

    sample_times are physical regardless of time_scale; in the fast
    scaling the solver runs to horizon/epsilon internally and converts.
    """
    if horizon <= 0:
        raise ConfigError(f"horizon must be positive, got {horizon}")
    if time_scale not in TIME_SCALES:
        raise ConfigError(f"time_scale must be one of {TIME_SCALES}")
    times = sorted(set(float(t) for t in sample_times))
    if not times:
        raise ConfigError("need at least one sample time")
    if times[0] < 0 or times[-1] > horizon * (1 + 1e-12):
        raise ConfigError("sample times must lie within [0, horizon]")
    if cfg is None:
        cfg = default_stepper(spec.epsilon, time_scale)

    if time_scale == "physical":
        a_int, a_bc = spec.epsilon, 1.0
        to_solver_time = lambda t: t
    else:
        a_int, a_bc = 1.0, spec.epsilon
        to_solver_time = lambda t: t / spec.epsilon

    far_value = (
        float(spec._sample(np.array([grid.R]))[0])
        if cfg.far_bc == "dirichlet_frozen"
        else 0.0
    )
    stepper = _CoupledStepper(grid, spec.dim, a_int, a_bc, far_value)

    u = spec.initial_vector(grid)
    u[-1] = far_value if cfg.far_bc == "dirichlet_frozen" else u[-1]
    states = {}
    if times[0] == 0.0:
        states[0.0] = u.copy()
        pending = times[1:]
    else:
        pending = times

    residual_max = 0.0
    t_solver, dt, k = 0.0, cfg.dt_initial, 0
    for target in pending:
        target_solver = to_solver_time(target)
        while t_solver < target_solver * (1 - 1e-15):
            step = min(dt, target_solver - t_solver)
            theta = 1.0 if k < cfg.rannacher_steps else cfg.theta
            u_new = stepper.step(u, step, theta)
            residual_max = max(
                residual_max, stepper.law_residual(u, u_new, step, theta)
            )
            u = u_new
            t_solver += step
            k += 1
            dt *= cfg.dt_growth
        states[target] = u.copy()

    if not np.all(np.isfinite(u)):
        raise SolverError("solution became non-finite during time stepping")

    ordered = sorted(states)
    return Trajectory(
        times=np.array(ordered),
        states=tuple(
            DynBCState(
                interior=RadialField(grid, states[t]),
                boundary_value=float(states[t][0]),
                time=t,
            )
            for t in ordered
        ),
        boundary_residual_max=residual_max,
        meta={
            "epsilon": spec.epsilon,
            "dim": spec.dim,
            "time_scale": time_scale,
            "grid_nodes": grid.n,
            "R": grid.R,
            "dt0": cfg.dt_initial,
        },
    )


def error_vs_limit(traj: Trajectory, spec: ProblemSpec, K_r, t_window) -> float:
    """Sup over sampled (r, t) in K_r x t_window of |u - limit profile|.

    The limit profile is phi_b (e^t r)^{-(N-2)}; with phi_b = 0 this is
    simply the sup of |u| over the window.
    """
    r_lo, r_hi = K_r
    t_lo, t_hi = t_window
    grid = traj.states[0].interior.grid
    mask = (grid.r >= r_lo) & (grid.r <= r_hi)
    if not np.any(mask):
        raise ConfigError("no grid nodes inside K_r")
    worst = -1.0
    seen = False
    for state in traj.states:
        if not t_lo <= state.time <= t_hi:
            continue
        seen = True
        ref = limit_profile(spec.dim, spec.phi_b, grid.r[mask], state.time)
        worst = max(worst, float(np.abs(state.interior.values[mask] - ref).max()))
    if not seen:
        raise ConfigError("no sampled times inside the window")
    return worst
