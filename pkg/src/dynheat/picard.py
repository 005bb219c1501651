"""Duhamel fixed-point solver for the boundary-coupled heat flow, radial case.

The direct solver in dynbc marches the coupled PDE.  This module solves the
same problem through its integral-equation form: split u = v + w where v is
a Dirichlet heat flow driven by boundary-flux sources and w is the harmonic
extension of the evolving boundary value.  With Phi = phi - phi_b r^{2-N},
v solves the fixed-point equation

    v(t) = S1(t/eps) Phi - D[phi_b](t) + int_0^t S1((t-s)/eps) F[v](s) ds

where S1 is the Dirichlet heat semigroup in fast time, D[phi_b] collects the
drift of the harmonic background, and F[v] is the flux response built from
g(s) = -d_r v(1, s).  For radial data with constant boundary datum every
sphere integral collapses onto multiples of q(r) = r^{2-N}, so both Duhamel
terms are scalar-in-time convolutions against the single evolved profile
B(sigma) = S1(sigma) q.  B is computed once per run on a geometric fast-time
table and linearly interpolated in sigma.

Convergence is measured in a weighted trajectory norm: E[v](t) combines the
sup of v and a diffusive weight times the sup of its radial gradient, and
the norm is sup_t e^{-Lt} E[v](t).  The weight L is found by a doubling
search until the flux-convolution map contracts on random difference
trajectories; the harmonic part w is reconstructed from the converged flux
series at the end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynbc import ProblemSpec, default_stepper, truncation_radius
from .errors import ConfigError, NonConvergenceError, SolverError
from .radial_heat import (
    HeatStepperConfig,
    RadialField,
    RadialGrid,
    boundary_gradient_coefficients,
    build_graded_grid,
    evolve_s1_snapshots,
    time_step_sequence,
)

DEFAULT_GRID_NODES = 1500
CONTRACTION_TARGET = 0.5
L_CAP = 2 ** 10
PROBE_PAIRS = 5
PROBE_SEED = 7


@dataclass(frozen=True)
class PicardConfig:
    """Horizon, weight, and stopping rules for the fixed-point iteration.

    L = None asks picard_solve to find the weight by the doubling search.
    alpha = None resolves to 1 for dim 3 and 1.5 for dim >= 4; an explicit
    value must be 1 for dim 3 or inside (1, 2) otherwise.
    """

    T: float
    L: float | None = None
    max_iter: int = 40
    tol: float = 1e-8
    alpha: float | None = None

    def __post_init__(self):
        if not (np.isfinite(self.T) and self.T > 0):
            raise ConfigError(f"horizon T must be positive and finite, got {self.T}")
        if self.L is not None and not (np.isfinite(self.L) and self.L >= 1):
            raise ConfigError(f"weight L must be >= 1 when given, got {self.L}")
        if self.max_iter < 1:
            raise ConfigError(f"max_iter must be >= 1, got {self.max_iter}")
        if not (np.isfinite(self.tol) and self.tol > 0):
            raise ConfigError(f"tol must be positive, got {self.tol}")
        if self.alpha is not None and not np.isfinite(self.alpha):
            raise ConfigError(f"alpha must be finite when given, got {self.alpha}")


def resolve_alpha(dim: int, alpha: float | None) -> float:
    """Rate exponent for the trajectory norm; dim 3 admits only alpha = 1."""
    if alpha is None:
        return 1.0 if dim == 3 else 1.5
    if dim == 3:
        if alpha != 1.0:
            raise ConfigError(f"alpha must be 1 for dim 3, got {alpha}")
        return 1.0
    if not 1.0 < alpha < 2.0:
        raise ConfigError(f"alpha must lie in (1, 2) for dim >= 4, got {alpha}")
    return float(alpha)


@dataclass(frozen=True)
class FluxSeries:
    """Scalar time series of the boundary flux g(s) = -d_r v(1, s)."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        if times.ndim != 1 or times.size < 2 or values.shape != times.shape:
            raise ConfigError("flux series needs matching 1-d times and values")
        if times[0] != 0.0 or np.any(np.diff(times) <= 0):
            raise ConfigError("flux times must increase strictly from 0")
        if not np.all(np.isfinite(values)):
            raise ConfigError("flux values must be finite")


@dataclass(frozen=True)
class FieldPath:
    """Radial field trajectory stored as one row per mesh time."""

    grid: RadialGrid
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        if times.ndim != 1 or times.size < 2:
            raise ConfigError("field path needs at least two times")
        if times[0] != 0.0 or np.any(np.diff(times) <= 0):
            raise ConfigError("path times must increase strictly from 0")
        if values.shape != (times.size, self.grid.n):
            raise ConfigError(
                f"path values must have shape {(times.size, self.grid.n)}, "
                f"got {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ConfigError("path values must be finite")


@dataclass(frozen=True)
class VWPair:
    """Converged solution pair: heat part v, its flux series g, harmonic part w."""

    v: FieldPath
    g: FluxSeries
    w: FieldPath
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (
            np.array_equal(self.v.times, self.g.times)
            and np.array_equal(self.v.times, self.w.times)
        ):
            raise ConfigError("v, g and w must share one time mesh")
        if self.v.grid is not self.w.grid:
            raise ConfigError("v and w must share one grid")

    def u_values(self) -> np.ndarray:
        """Total solution rows u = v + w on the shared mesh."""
        return self.v.values + self.w.values


@dataclass(frozen=True)
class ContractionReport:
    """Outcome of the doubling search for the norm weight."""

    L: float
    ratio: float
    history: tuple


def phi_effective(spec: ProblemSpec, grid: RadialGrid) -> RadialField:
    """Shifted initial datum Phi = phi - phi_b r^{2-dim} on the grid."""
    values = spec._sample(grid.r) - spec.phi_b * grid.r ** (2.0 - spec.dim)
    return RadialField(grid, values)


def _q_profile(grid: RadialGrid, dim: int) -> np.ndarray:
    return grid.r ** (2.0 - dim)


def _flux_series(grid: RadialGrid, rows: np.ndarray) -> np.ndarray:
    # g = -d_r v(1, .) per row, one-sided second-order stencil
    coeff = boundary_gradient_coefficients(grid)
    return -(rows[:, :3] @ coeff)


def _memory_series(times: np.ndarray, g: np.ndarray, rate: float) -> np.ndarray:
    """C(t_k) = int_0^{t_k} e^{-rate (t_k - s)} g(s) ds on the mesh.

    Exact exponential recursion cell by cell; the first cell uses the
    product-rule weight 2 h g(h) because the flux may grow like s^{-1/2}
    toward s = 0.
    """
    out = np.zeros_like(g)
    h = np.diff(times)
    out[1] = 2.0 * h[0] * g[1]
    decay = np.exp(-rate * h)
    for j in range(1, h.size):
        out[j + 1] = decay[j] * out[j] + 0.5 * h[j] * (decay[j] * g[j] + g[j + 1])
    return out


def _table_lerp(sigmas: np.ndarray, table: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Rows of the B table linearly interpolated at fast times s."""
    s = np.clip(s, 0.0, sigmas[-1])
    idx = np.clip(np.searchsorted(sigmas, s) - 1, 0, sigmas.size - 2)
    span = sigmas[idx + 1] - sigmas[idx]
    w = (s - sigmas[idx]) / span
    return (1.0 - w)[:, None] * table[idx] + w[:, None] * table[idx + 1]


def _convolve_rows(
    sigmas: np.ndarray,
    times: np.ndarray,
    table: np.ndarray,
    epsilon: float,
    g_of_s,
) -> np.ndarray:
    """Rows of int_0^{t_k} g(s) B((t_k - s)/eps) ds for every mesh time t_k.

    Composite midpoint on the union of the time mesh and the reflected
    fast table: dense near s = 0 where g varies fastest and near s = t_k
    where B does.  Midpoints never touch sigma = 0, so the boundary
    incompatibility of the unevolved profile is never sampled.
    """
    out = np.zeros((times.size, table.shape[1]))
    for k in range(1, times.size):
        t_k = times[k]
        nodes = np.unique(
            np.clip(
                np.concatenate([times[: k + 1], t_k - epsilon * sigmas[: k + 1]]),
                0.0,
                t_k,
            )
        )
        widths = np.diff(nodes)
        mids = 0.5 * (nodes[:-1] + nodes[1:])
        rows = _table_lerp(sigmas, table, (t_k - mids) / epsilon)
        out[k] = (widths * g_of_s(mids)) @ rows
    return out


@dataclass(frozen=True)
class _Context:
    """Per-run tables: mesh, evolved q profile, and the v0 trajectory."""

    spec: ProblemSpec
    grid: RadialGrid
    times: np.ndarray
    sigmas: np.ndarray
    b_table: np.ndarray
    base_rows: np.ndarray


def _build_context(
    spec: ProblemSpec,
    cfg: PicardConfig,
    grid: RadialGrid | None,
    stepper: HeatStepperConfig | None,
) -> _Context:
    st = stepper if stepper is not None else default_stepper(spec.epsilon, "fast")
    if grid is None:
        grid = build_graded_grid(
            DEFAULT_GRID_NODES, truncation_radius(spec.epsilon, cfg.T)
        )
    sigma_max = cfg.T / spec.epsilon
    sigmas = np.concatenate(
        [[0.0], np.cumsum(time_step_sequence(sigma_max, st.dt_initial, st.dt_growth))]
    )
    sigmas[-1] = sigma_max
    times = spec.epsilon * sigmas
    times[-1] = cfg.T

    dim = spec.dim
    q = _q_profile(grid, dim)
    b_rows = evolve_s1_snapshots(RadialField(grid, q), sigmas[1:], st, dim=dim)
    head = q.copy()
    head[0] = 0.0  # boundary limit of the evolved profile, not the datum
    b_table = np.vstack([head, b_rows])

    phi_eff = phi_effective(spec, grid)
    if np.any(phi_eff.values):
        a_rows = np.vstack(
            [phi_eff.values, evolve_s1_snapshots(phi_eff, sigmas[1:], st, dim=dim)]
        )
    else:
        a_rows = np.zeros((times.size, grid.n))

    rate = dim - 2
    if spec.phi_b != 0.0:
        def drift(s):
            return -rate * spec.phi_b * np.exp(-rate * s)

        d_rows = _convolve_rows(sigmas, times, b_table, spec.epsilon, drift)
    else:
        d_rows = np.zeros_like(a_rows)

    return _Context(spec, grid, times, sigmas, b_table, a_rows - d_rows)


def _dtilde_rows(ctx: _Context, rows: np.ndarray) -> np.ndarray:
    """Flux-response Duhamel term of the trajectory given by rows."""
    rate = ctx.spec.dim - 2
    g = _flux_series(ctx.grid, rows)
    g_eff = g - rate * _memory_series(ctx.times, g, rate)
    return _convolve_rows(
        ctx.sigmas,
        ctx.times,
        ctx.b_table,
        ctx.spec.epsilon,
        lambda s: np.interp(s, ctx.times, g_eff),
    )


def _e_series(
    grid: RadialGrid,
    times: np.ndarray,
    rows: np.ndarray,
    epsilon: float,
    alpha: float,
) -> np.ndarray:
    """Weighted amplitude E[v](t_k) combining sup of v and of its gradient."""
    tau = times / epsilon
    sup_v = np.abs(rows).max(axis=1)
    sup_dv = np.abs(np.gradient(rows, grid.r, axis=1)).max(axis=1)
    return (1.0 + tau ** (alpha / 2)) * sup_v + np.sqrt(tau) * (
        1.0 + tau ** ((alpha - 1) / 2)
    ) * sup_dv


def x_norm(path: FieldPath, cfg: PicardConfig, epsilon: float, dim: int) -> float:
    """Trajectory norm sup_t e^{-Lt} E[v](t) over the stored mesh."""
    if cfg.L is None:
        raise ConfigError("x_norm needs a resolved weight L")
    alpha = resolve_alpha(dim, cfg.alpha)
    e = _e_series(path.grid, path.times, path.values, epsilon, alpha)
    return float(np.max(np.exp(-cfg.L * path.times) * e))


def d_eps(
    spec: ProblemSpec,
    psi_b: float,
    t: float,
    *,
    grid: RadialGrid | None = None,
    stepper: HeatStepperConfig | None = None,
) -> RadialField:
    """Drift term D[psi](t) for a constant boundary value psi.

    The forcing profile is -(dim-2) psi e^{-(dim-2)s} q(r), so the Duhamel
    integral is a scalar convolution against B(sigma) = S1(sigma) q.  One
    evolution pass provides B at all composite-midpoint source times.
    """
    if t <= 0:
        raise ConfigError(f"time must be positive, got {t}")
    st = stepper if stepper is not None else default_stepper(spec.epsilon, "fast")
    if grid is None:
        grid = build_graded_grid(DEFAULT_GRID_NODES, truncation_radius(spec.epsilon, t))
    if psi_b == 0.0:
        return RadialField(grid, np.zeros(grid.n))
    # mesh the source times through the fast variable sigma = (t - s)/eps:
    # the evolved profile changes fastest near s = t where sigma -> 0
    sig_steps = np.asarray(
        time_step_sequence(t / spec.epsilon, st.dt_initial, st.dt_growth)
    )
    sig_edges = np.concatenate([[0.0], np.cumsum(sig_steps)])
    sig_mids = 0.5 * (sig_edges[:-1] + sig_edges[1:])
    source_times = t - spec.epsilon * sig_mids
    q = _q_profile(grid, spec.dim)
    b_rows = evolve_s1_snapshots(RadialField(grid, q), sig_mids, st, dim=spec.dim)
    rate = spec.dim - 2
    coeff = -rate * psi_b * spec.epsilon * sig_steps * np.exp(-rate * source_times)
    return RadialField(grid, coeff @ b_rows)


def f2_radial(g: FluxSeries, radius: float, t: float, *, dim: int) -> float:
    """Flux response q(radius) (g(t) - (dim-2) C(t)) from a stored flux series."""
    if radius < 1.0:
        raise ConfigError(f"radius must be >= 1, got {radius}")
    times, values = _series_up_to(g, t)
    rate = dim - 2
    mem = _memory_series(times, values, rate)[-1] if times.size > 1 else 0.0
    return float(radius ** (2.0 - dim) * (values[-1] - rate * mem))


def reconstruct_w(spec: ProblemSpec, g: FluxSeries, t: float, radius: float) -> float:
    """Harmonic part w(radius, t) rebuilt from the flux series.

    Both the background value and the flux correction scale the same
    harmonic profile: w = q(radius) (phi_b e^{-(dim-2)t} - C(t)).
    """
    if radius < 1.0:
        raise ConfigError(f"radius must be >= 1, got {radius}")
    times, values = _series_up_to(g, t)
    rate = spec.dim - 2
    mem = _memory_series(times, values, rate)[-1] if times.size > 1 else 0.0
    return float(radius ** (2.0 - spec.dim) * (spec.phi_b * math.exp(-rate * t) - mem))


def _series_up_to(g: FluxSeries, t: float):
    """Restrict a flux series to [0, t], interpolating the endpoint."""
    if t < 0 or t > g.times[-1] * (1 + 1e-12):
        raise ConfigError(f"time {t} outside stored flux series")
    keep = g.times <= t * (1 + 1e-12)
    times = g.times[keep]
    values = g.values[keep]
    if times.size == 0 or not np.isclose(times[-1], t, rtol=1e-12, atol=1e-15):
        times = np.append(times, t)
        values = np.append(values, np.interp(t, g.times, g.values))
    return times, values


def q_eps_step(
    spec: ProblemSpec,
    cfg: PicardConfig,
    v: FieldPath,
    *,
    stepper: HeatStepperConfig | None = None,
) -> FieldPath:
    """One application of the fixed-point map to a trajectory."""
    ctx = _build_context(spec, cfg, v.grid, stepper)
    if ctx.times.size != v.times.size or not np.allclose(
        ctx.times, v.times, rtol=1e-12, atol=1e-12
    ):
        raise ConfigError("trajectory times do not match the step sequence")
    rows = ctx.base_rows + _dtilde_rows(ctx, v.values)
    return FieldPath(v.grid, ctx.times.copy(), rows)


def _probe_rows(grid: RadialGrid, times: np.ndarray, rng) -> np.ndarray:
    """Random smooth trajectory vanishing at r = 1 with unit boundary flux scale."""
    rows = np.zeros((times.size, grid.n))
    x = grid.r - 1.0
    for _ in range(3):
        amp = rng.uniform(0.5, 1.5)
        omega = rng.uniform(0.0, 6.0)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        lam = rng.uniform(0.0, 3.0)
        mu = rng.uniform(0.5, 3.0)
        time_part = amp * np.cos(omega * times + phase) * np.exp(-lam * times)
        rows += time_part[:, None] * (x * np.exp(-mu * x))[None, :]
    return rows


def _contraction_search(
    ctx: _Context, alpha: float, pairs: int, seed: int
) -> ContractionReport:
    rng = np.random.default_rng(seed)
    epsilon = ctx.spec.epsilon
    samples = []
    for _ in range(pairs):
        diff = _probe_rows(ctx.grid, ctx.times, rng) - _probe_rows(
            ctx.grid, ctx.times, rng
        )
        e_in = _e_series(ctx.grid, ctx.times, diff, epsilon, alpha)
        e_out = _e_series(
            ctx.grid, ctx.times, _dtilde_rows(ctx, diff), epsilon, alpha
        )
        samples.append((e_in, e_out))
    history = []
    L = 1.0
    while L <= L_CAP:
        weight = np.exp(-L * ctx.times)
        ratio = max(
            np.max(weight * e_out) / np.max(weight * e_in) for e_in, e_out in samples
        )
        history.append((L, float(ratio)))
        if ratio <= CONTRACTION_TARGET:
            return ContractionReport(L, float(ratio), tuple(history))
        L *= 2.0
    raise NonConvergenceError(
        f"no contraction weight found up to L = {L_CAP}",
        {"history": history},
    )


def find_contraction_L(
    spec: ProblemSpec,
    cfg: PicardConfig,
    *,
    grid: RadialGrid | None = None,
    stepper: HeatStepperConfig | None = None,
    pairs: int = PROBE_PAIRS,
    seed: int = PROBE_SEED,
) -> ContractionReport:
    """Double L from 1 until the flux map contracts on random differences."""
    ctx = _build_context(spec, cfg, grid, stepper)
    alpha = resolve_alpha(spec.dim, cfg.alpha)
    return _contraction_search(ctx, alpha, pairs, seed)


def measure_contraction(
    spec: ProblemSpec,
    cfg: PicardConfig,
    *,
    grid: RadialGrid | None = None,
    stepper: HeatStepperConfig | None = None,
    pairs: int = PROBE_PAIRS,
    seed: int = PROBE_SEED,
) -> float:
    """Worst ratio of the flux map at the fixed weight cfg.L."""
    if cfg.L is None:
        raise ConfigError("measure_contraction needs a resolved weight L")
    ctx = _build_context(spec, cfg, grid, stepper)
    alpha = resolve_alpha(spec.dim, cfg.alpha)
    rng = np.random.default_rng(seed)
    weight = np.exp(-cfg.L * ctx.times)
    worst = 0.0
    for _ in range(pairs):
        diff = _probe_rows(ctx.grid, ctx.times, rng) - _probe_rows(
            ctx.grid, ctx.times, rng
        )
        e_in = _e_series(ctx.grid, ctx.times, diff, spec.epsilon, alpha)
        e_out = _e_series(
            ctx.grid, ctx.times, _dtilde_rows(ctx, diff), spec.epsilon, alpha
        )
        worst = max(worst, np.max(weight * e_out) / np.max(weight * e_in))
    return float(worst)


def picard_solve(
    spec: ProblemSpec,
    cfg: PicardConfig,
    *,
    grid: RadialGrid | None = None,
    stepper: HeatStepperConfig | None = None,
    initial: FieldPath | None = None,
) -> VWPair:
    """Iterate the fixed-point map to the solution pair (v, w).

    Starts from v0 = S1(t/eps) Phi - D[phi_b] unless an initial trajectory
    is given.  Stops when the trajectory-norm increment drops below
    cfg.tol; raises NonConvergenceError with the increment history if the
    iteration budget runs out.
    """
    ctx = _build_context(spec, cfg, grid, stepper)
    alpha = resolve_alpha(spec.dim, cfg.alpha)
    if cfg.L is None:
        report = _contraction_search(ctx, alpha, PROBE_PAIRS, PROBE_SEED)
        L, ratio = report.L, report.ratio
    else:
        L, ratio = float(cfg.L), None

    if initial is None:
        rows = ctx.base_rows.copy()
    else:
        if initial.values.shape != ctx.base_rows.shape or not np.allclose(
            initial.times, ctx.times, rtol=1e-12, atol=1e-12
        ):
            raise ConfigError("initial trajectory does not match the step sequence")
        rows = initial.values.copy()

    weight = np.exp(-L * ctx.times)
    increments = []
    converged = False
    for _ in range(cfg.max_iter):
        new_rows = ctx.base_rows + _dtilde_rows(ctx, rows)
        if not np.all(np.isfinite(new_rows)):
            raise SolverError("fixed-point iterate is not finite")
        diff = _e_series(ctx.grid, ctx.times, new_rows - rows, spec.epsilon, alpha)
        inc = float(np.max(weight * diff))
        increments.append(inc)
        rows = new_rows
        if inc < cfg.tol:
            converged = True
            break
    if not converged:
        raise NonConvergenceError(
            f"fixed-point iteration did not reach tol {cfg.tol} "
            f"in {cfg.max_iter} steps",
            {"increments": increments, "L": L},
        )

    rate = spec.dim - 2
    g = _flux_series(ctx.grid, rows)
    mem = _memory_series(ctx.times, g, rate)
    q = _q_profile(ctx.grid, spec.dim)
    w_rows = (spec.phi_b * np.exp(-rate * ctx.times) - mem)[:, None] * q[None, :]
    meta = {
        "iterations": len(increments),
        "increments": tuple(increments),
        "L": L,
        "contraction_ratio": ratio,
        "epsilon": spec.epsilon,
        "dim": spec.dim,
        "grid_nodes": ctx.grid.n,
        "R": ctx.grid.R,
    }
    return VWPair(
        FieldPath(ctx.grid, ctx.times, rows),
        FluxSeries(ctx.times, g),
        FieldPath(ctx.grid, ctx.times, w_rows),
        meta,
    )
