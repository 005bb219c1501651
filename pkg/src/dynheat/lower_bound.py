"""Subsolution machinery for the lower convergence rate.

The comparison argument runs on a cutoff datum phi(r) = r^{2-dim} for
r > b, zero inside.  Its Dirichlet heat evolution z(r, t) is a
subsolution of the full problem after the time rescaling t -> t/eps, so
inf over a compact window K_r x [t1, t2] of the solved u_eps inherits
the algebraic floor of z: z(r, t) decays exactly like t^{1-dim/2} at
fixed r, which turns into the eps^{dim/2-1} lower rate.

Three layers:

  * heat_profile / subsolution evolve the cutoff datum (one theta-scheme
    pass, aggressive step growth for the long rescaled horizons).
  * decay_certificate samples z(r,t) * t^{dim/2-1} over K_r and a
    log-spaced time window; a positive minimum certifies the floor.
  * rate_entry / lower_rate_report solve the dynamical-boundary problem
    per ladder epsilon, take inf over the window, and fit the log-log
    slope, recording the pointwise gap u - z as a comparison check.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from dynheat.dynbc import ProblemSpec, solve_dynbc, truncation_radius
from dynheat.errors import ConfigError, SolverError
from dynheat.radial_heat import (
    HeatStepperConfig,
    RadialField,
    build_graded_grid,
    evolve_s1_snapshots,
    field_from_function,
)

LONG_GRID_NODES = 2000
RATE_GRID_NODES = 1500
CERT_SAMPLES = 25
RATE_LATTICE = 9


def long_time_stepper() -> HeatStepperConfig:
    """Step policy for horizons up to ~1e4: geometric growth 1.1."""
    return HeatStepperConfig(dt_initial=1e-3, dt_growth=1.1)


@dataclass(frozen=True)
class LowerBoundSpec:
    dim: int
    b: float = 2.0
    K_r: tuple = (1.5, 2.0)
    t_window: tuple = (1.0, 2.0)

    def __post_init__(self):
        if self.dim < 3:
            raise ConfigError(f"dimension must be >= 3, got {self.dim}")
        if not (math.isfinite(self.b) and self.b > 1.0):
            raise ConfigError(f"cutoff radius must exceed 1, got {self.b}")
        k0, k1 = self.K_r
        if not (1.0 < k0 <= k1 and math.isfinite(k1)):
            raise ConfigError(f"K_r must be a bounded interval in (1, inf), got {self.K_r}")
        t1, t2 = self.t_window
        if not (0.0 < t1 <= t2 and math.isfinite(t2)):
            raise ConfigError(f"t_window must satisfy 0 < t1 <= t2, got {self.t_window}")


def cutoff_datum(spec: LowerBoundSpec):
    """Radial datum r^{2-dim} outside radius b, zero inside."""
    power = 2.0 - spec.dim
    b = spec.b

    def phi(r):
        r = np.asarray(r, dtype=float)
        return np.where(r > b, r ** power, 0.0)

    return phi


def problem_spec(spec: LowerBoundSpec, epsilon: float) -> ProblemSpec:
    """Dynamical-boundary problem with the cutoff datum and zero trace."""
    return ProblemSpec(spec.dim, epsilon, cutoff_datum(spec), 0.0)


def _default_grid(spec: LowerBoundSpec, t_max: float):
    R = spec.b + max(8.0 * math.sqrt(t_max), 2.0)
    return build_graded_grid(LONG_GRID_NODES, R)


def _profile_rows(spec, times, grid, cfg) -> np.ndarray:
    phi = field_from_function(grid, cutoff_datum(spec))
    return evolve_s1_snapshots(phi, times, cfg, dim=spec.dim)


def heat_profile(spec: LowerBoundSpec, t: float, *, grid=None, cfg=None) -> RadialField:
    """Dirichlet heat evolution of the cutoff datum at time t."""
    if t <= 0:
        raise ConfigError(f"time must be positive, got {t}")
    cfg = cfg or long_time_stepper()
    grid = grid or _default_grid(spec, t)
    return RadialField(grid, _profile_rows(spec, [t], grid, cfg)[0])


def subsolution(spec: LowerBoundSpec, epsilon: float, r: float, t: float,
                *, grid=None, cfg=None) -> float:
    """Heat profile at the rescaled time t/epsilon, sampled at radius r."""
    if not 0.0 < epsilon <= 1.0:
        raise ConfigError(f"epsilon must lie in (0, 1], got {epsilon}")
    field = heat_profile(spec, t / epsilon, grid=grid, cfg=cfg)
    if not field.grid.r[0] <= r <= field.grid.r[-1]:
        raise ConfigError(f"radius {r} outside the grid [1, {field.grid.R}]")
    return float(np.interp(r, field.grid.r, field.values))


def subsolution_snapshots(spec: LowerBoundSpec, epsilon: float, times, grid,
                          cfg=None) -> np.ndarray:
    """Rows of the rescaled heat profile at each requested physical time.

    One evolution pass on the caller's grid, so the rows compare
    directly against a solved trajectory on the same nodes.
    """
    if not 0.0 < epsilon <= 1.0:
        raise ConfigError(f"epsilon must lie in (0, 1], got {epsilon}")
    times = np.asarray(times, dtype=float)
    if times.size == 0 or np.any(times <= 0):
        raise ConfigError("times must be positive")
    cfg = cfg or long_time_stepper()
    order = np.argsort(times)
    rows = _profile_rows(spec, list(times[order] / epsilon), grid, cfg)
    return rows[np.argsort(order)]


def _decay_samples(spec, t_range, n_times, grid, cfg):
    t1, t2 = t_range
    if not 0.0 < t1 <= t2:
        raise ConfigError(f"time range must satisfy 0 < t1 <= t2, got {t_range}")
    times = np.geomspace(t1, t2, n_times) if t2 > t1 else np.array([t1])
    cfg = cfg or long_time_stepper()
    grid = grid or _default_grid(spec, t2)
    mask = (grid.r >= spec.K_r[0]) & (grid.r <= spec.K_r[1])
    if np.count_nonzero(mask) < 3:
        raise ConfigError("grid has fewer than 3 nodes inside K_r")
    rows = _profile_rows(spec, list(times), grid, cfg)
    power = spec.dim / 2.0 - 1.0
    weighted = rows[:, mask] * (times ** power)[:, None]
    return times, grid.r[mask], weighted


def decay_profile(spec: LowerBoundSpec, t_range, *, n_times=CERT_SAMPLES,
                  grid=None, cfg=None):
    """Per-time minimum over K_r of z(r,t) * t^{dim/2-1}.

    Returns (times, profile); a profile bounded away from zero shows the
    t^{1-dim/2} decay law is attained (not just an upper envelope).
    """
    times, _, weighted = _decay_samples(spec, t_range, n_times, grid, cfg)
    return times, weighted.min(axis=1)


def decay_certificate(spec: LowerBoundSpec, t_range, *, n_times=CERT_SAMPLES,
                      grid=None, cfg=None) -> float:
    """Minimum over K_r x t_range of z(r,t) * t^{dim/2-1}.

    Strictly positive output certifies the algebraic floor on the
    sampled window; a nonpositive minimum raises with the violating
    sample.
    """
    times, radii, weighted = _decay_samples(spec, t_range, n_times, grid, cfg)
    j, i = np.unravel_index(np.argmin(weighted), weighted.shape)
    cert = float(weighted[j, i])
    if cert <= 0.0:
        raise SolverError(
            f"decay certificate nonpositive: z*t^{spec.dim / 2 - 1:g} = "
            f"{cert:.6e} at r = {radii[i]:.6g}, t = {times[j]:.6g}"
        )
    return cert


def rate_entry(spec: LowerBoundSpec, epsilon: float, *, n_times=RATE_LATTICE,
               grid_nodes=RATE_GRID_NODES, grid=None, dyn_cfg=None,
               z_cfg=None) -> dict:
    """Window infimum of u_eps plus the pointwise gap against the subsolution.

    One dynamical-boundary solve and one heat pass share the grid; the
    infimum runs over grid nodes inside K_r times an n_times lattice in
    t_window, and the gap is min over all sampled nodes and times of
    u - z(., t/eps).
    """
    t1, t2 = spec.t_window
    times = np.linspace(t1, t2, n_times)
    if grid is None:
        grid = build_graded_grid(grid_nodes, truncation_radius(epsilon, t2))
    prob = problem_spec(spec, epsilon)
    traj = solve_dynbc(prob, t2, times, grid, cfg=dyn_cfg)
    u_rows = np.array([traj.state_at(t).interior.values for t in times])
    z_rows = subsolution_snapshots(spec, epsilon, times, grid, cfg=z_cfg)
    mask = (grid.r >= spec.K_r[0]) & (grid.r <= spec.K_r[1])
    if np.count_nonzero(mask) < 3:
        raise ConfigError("grid has fewer than 3 nodes inside K_r")
    return {
        "epsilon": float(epsilon),
        "infimum": float(u_rows[:, mask].min()),
        "comparison_gap": float((u_rows - z_rows).min()),
        "grid_nodes": grid.n,
        "R": grid.R,
        "dt0": (dyn_cfg.dt_initial if dyn_cfg is not None else 1e-3 * epsilon),
    }


def _entry_job(args):
    spec, epsilon, n_times, grid_nodes, dyn_cfg, z_cfg = args
    try:
        return rate_entry(spec, epsilon, n_times=n_times, grid_nodes=grid_nodes,
                          dyn_cfg=dyn_cfg, z_cfg=z_cfg)
    except SolverError as err:
        return {"epsilon": float(epsilon), "failure": str(err)}


def _report_meta(res: dict) -> dict:
    return {k: res[k] for k in ("grid_nodes", "R", "dt0")}


def lower_rate_report(spec: LowerBoundSpec, epsilons, cfgs=None, *,
                      n_times=RATE_LATTICE, grid_nodes=RATE_GRID_NODES,
                      workers=None):
    """Fit the log-log slope of inf over the window of u_eps vs epsilon.

    epsilons must be decreasing and span at least 1.5 decades.  cfgs is
    None (per-epsilon default stepper), a single HeatStepperConfig, or a
    sequence matching the ladder.  Entries failing the solve or landing
    at a nonpositive infimum are recorded in validation and excluded
    from the fit; fewer than 4 survivors is an error.
    """
    from dynheat.harness import RateReport, fit_loglog

    eps = [float(e) for e in epsilons]
    if any(a <= b for a, b in zip(eps, eps[1:])) or min(eps) <= 0:
        raise ConfigError("epsilon ladder must be positive and decreasing")
    if max(eps) / min(eps) < 10.0 ** 1.5:
        raise ConfigError("epsilon ladder must span at least 1.5 decades")
    if cfgs is None or isinstance(cfgs, HeatStepperConfig):
        cfgs = [cfgs] * len(eps)
    elif len(cfgs) != len(eps):
        raise ConfigError("cfgs must match the epsilon ladder")

    jobs = [(spec, e, n_times, grid_nodes, c, None) for e, c in zip(eps, cfgs)]
    if workers is not None and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_entry_job, jobs))
    else:
        results = [_entry_job(job) for job in jobs]

    failures = {}
    points = []
    gaps = {}
    meta = []
    for res in results:
        e = res["epsilon"]
        if "failure" in res:
            failures[repr(e)] = res["failure"]
        elif res["infimum"] <= 0.0:
            failures[repr(e)] = f"window infimum nonpositive: {res['infimum']:.6e}"
        else:
            points.append((e, res["infimum"]))
            gaps[repr(e)] = res["comparison_gap"]
            meta.append(_report_meta(res))
    if len(points) < 4:
        raise SolverError(
            f"only {len(points)} ladder entries usable, need >= 4; "
            f"failures: {failures}"
        )
    slope, intercept, residual = fit_loglog(points)
    validation = {
        "solver_failures": failures,
        "comparison_gaps": gaps,
        "min_comparison_gap": min(gaps.values()),
    }
    config = {
        "scenario": "lower_rate",
        "dim": spec.dim,
        "b": spec.b,
        "K_r": list(spec.K_r),
        "t_window": list(spec.t_window),
        "n_times": n_times,
        "grid_nodes": grid_nodes,
    }
    return RateReport(points=tuple(points), slope=slope, intercept=intercept,
                      residual=residual, validation=validation, config=config,
                      point_meta=tuple(meta))
