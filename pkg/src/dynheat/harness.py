"""Sweep orchestration: ladders, slope fits, refinement flags, reports.

A sweep runs one error functional per ladder epsilon, fits the log-log
slope, and attaches refinement diagnostics: the functional is recomputed
at doubled radius, doubled node count, and halved initial step for the
two extreme epsilons, and a flag is raised when it shifts by more than
20 percent.  Reports serialize to CSV (one row per ladder point) and
JSON (the full report, round-trippable bit-exactly).

Scenarios:

  * upper_rate: sup over K_r x t_window of |u_eps - limit profile| for
    the harmonic datum r^{2-dim} with unit boundary value.
  * lower_rate: inf over the same window of u_eps for the cutoff datum
    with zero boundary value, plus pointwise gaps against the rescaled
    heat profile.
  * d_eps_scaling: sup norm of the constant-datum drift response at
    t = 1.
  * picard_xval: relative sup discrepancy between the fixed-point
    solution v + w and the direct solver over t_window.

Resolution tiers bind node count and default ladder; every tier shares
the truncation rule R = 1 + 8 sqrt(t/eps).  All scenario paths are
deterministic, so identical configs produce identical report bytes.
"""

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from dynheat.dynbc import (
    ProblemSpec,
    error_vs_limit,
    solve_dynbc,
    truncation_radius,
)
from dynheat.errors import ConfigError, SolverError
from dynheat.lower_bound import LowerBoundSpec, long_time_stepper, rate_entry
from dynheat.picard import PicardConfig, d_eps, picard_solve
from dynheat.radial_heat import HeatStepperConfig, build_graded_grid

SCENARIOS = ("upper_rate", "lower_rate", "d_eps_scaling", "picard_xval")
SPAN_DECADES = 1.2
TIME_LATTICE = 9
RICHARDSON_LIMIT = 0.2

TIERS = {
    "smoke": {"grid_nodes": 700, "ladder": tuple(0.1 * 4.0 ** -k for k in range(4))},
    "standard": {"grid_nodes": 1500, "ladder": tuple(0.1 * 2.0 ** -k for k in range(5))},
    "thorough": {"grid_nodes": 3000, "ladder": tuple(0.1 * 2.0 ** -k for k in range(6))},
}


def default_ladder(tier: str):
    if tier not in TIERS:
        raise ConfigError(f"tier must be one of {tuple(TIERS)}, got {tier!r}")
    return TIERS[tier]["ladder"]


@dataclass(frozen=True)
class SweepConfig:
    scenario: str
    dim: int
    epsilons: tuple
    K_r: tuple = (1.5, 2.0)
    t_window: tuple = (1.0, 2.0)
    tier: str = "standard"

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if self.dim < 3:
            raise ConfigError(f"dimension must be >= 3, got {self.dim}")
        if self.tier not in TIERS:
            raise ConfigError(f"tier must be one of {tuple(TIERS)}, got {self.tier!r}")
        eps = tuple(float(e) for e in self.epsilons)
        if len(eps) < 4:
            raise ConfigError(f"epsilon ladder needs >= 4 entries, got {len(eps)}")
        if min(eps) <= 0 or any(a <= b for a, b in zip(eps, eps[1:])):
            raise ConfigError("epsilon ladder must be positive and decreasing")
        if math.log10(eps[0] / eps[-1]) < SPAN_DECADES - 1e-12:
            raise ConfigError(
                f"epsilon ladder must span >= {SPAN_DECADES} decades, "
                f"got {math.log10(eps[0] / eps[-1]):.3f}"
            )
        object.__setattr__(self, "epsilons", eps)
        k0, k1 = self.K_r
        if not (1.0 < k0 <= k1 and math.isfinite(k1)):
            raise ConfigError(f"K_r must be a bounded interval in (1, inf), got {self.K_r}")
        t1, t2 = self.t_window
        if not (0.0 < t1 <= t2 and math.isfinite(t2)):
            raise ConfigError(f"t_window must satisfy 0 < t1 <= t2, got {self.t_window}")
        object.__setattr__(self, "K_r", (float(k0), float(k1)))
        object.__setattr__(self, "t_window", (float(t1), float(t2)))


@dataclass(frozen=True)
class RateReport:
    points: tuple
    slope: float
    intercept: float
    residual: float
    validation: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    point_meta: tuple = ()

    def __post_init__(self):
        pts = tuple((float(e), float(v)) for e, v in self.points)
        if any(e <= 0 or v <= 0 for e, v in pts):
            raise ConfigError("report points must be positive")
        if not (math.isfinite(self.slope) and math.isfinite(self.intercept)
                and math.isfinite(self.residual)):
            raise ConfigError("fit parameters must be finite")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "point_meta", tuple(dict(m) for m in self.point_meta))

    def to_json(self) -> str:
        payload = {
            "points": [[e, v] for e, v in self.points],
            "slope": self.slope,
            "intercept": self.intercept,
            "residual": self.residual,
            "validation": self.validation,
            "config": self.config,
            "point_meta": list(self.point_meta),
        }
        return json.dumps(payload, sort_keys=True, indent=2)

    @staticmethod
    def from_json(text: str) -> "RateReport":
        raw = json.loads(text)
        return RateReport(
            points=tuple((e, v) for e, v in raw["points"]),
            slope=raw["slope"],
            intercept=raw["intercept"],
            residual=raw["residual"],
            validation=raw["validation"],
            config=raw["config"],
            point_meta=tuple(raw["point_meta"]),
        )


def fit_loglog(points):
    """Least-squares line in (log eps, log value); residual is the max
    absolute deviation in log space."""
    pts = [(float(e), float(v)) for e, v in points]
    if len(pts) < 2:
        raise ConfigError(f"fit needs >= 2 points, got {len(pts)}")
    if any(e <= 0 or v <= 0 for e, v in pts):
        raise ConfigError("fit points must be positive")
    x = np.log([e for e, _ in pts])
    y = np.log([v for _, v in pts])
    if np.ptp(x) == 0.0:
        raise ConfigError("degenerate fit: zero variance in epsilon")
    slope, intercept = np.polyfit(x, y, 1)
    residual = float(np.max(np.abs(y - (slope * x + intercept))))
    return float(slope), float(intercept), residual


def _harmonic_datum(dim: int):
    power = 2.0 - dim

    def phi(r):
        return np.asarray(r, dtype=float) ** power

    return phi


def _zero_datum(r):
    return np.zeros_like(np.asarray(r, dtype=float))


def _sweep_entry(cfg: SweepConfig, epsilon: float, refine: bool = False) -> dict:
    """One ladder evaluation; refine doubles R and nodes and halves dt0."""
    factor = 2 if refine else 1
    nodes = TIERS[cfg.tier]["grid_nodes"] * factor
    t1, t2 = cfg.t_window
    times = np.linspace(t1, t2, TIME_LATTICE)
    R = min(factor * truncation_radius(epsilon, t2), 1e4)
    extra = {}

    if cfg.scenario == "upper_rate":
        grid = build_graded_grid(nodes, R)
        prob = ProblemSpec(cfg.dim, epsilon, _harmonic_datum(cfg.dim), 1.0)
        step = HeatStepperConfig(dt_initial=1e-3 * epsilon / factor, dt_growth=1.05)
        traj = solve_dynbc(prob, t2, times, grid, cfg=step)
        error = error_vs_limit(traj, prob, cfg.K_r, cfg.t_window)
        dt0 = step.dt_initial
    elif cfg.scenario == "lower_rate":
        grid = build_graded_grid(nodes, R)
        lspec = LowerBoundSpec(cfg.dim, K_r=cfg.K_r, t_window=cfg.t_window)
        step = HeatStepperConfig(dt_initial=1e-3 * epsilon / factor, dt_growth=1.05)
        z_cfg = HeatStepperConfig(dt_initial=1e-3 / factor, dt_growth=1.1)
        entry = rate_entry(lspec, epsilon, n_times=TIME_LATTICE, grid=grid,
                           dyn_cfg=step, z_cfg=z_cfg)
        error = entry["infimum"]
        extra["comparison_gap"] = entry["comparison_gap"]
        dt0 = step.dt_initial
    elif cfg.scenario == "d_eps_scaling":
        t_ref = 1.0
        grid = build_graded_grid(nodes, min(factor * truncation_radius(epsilon, t_ref), 1e4))
        prob = ProblemSpec(cfg.dim, epsilon, _zero_datum, 0.0)
        step = HeatStepperConfig(dt_initial=1e-3 / factor, dt_growth=1.05)
        fld = d_eps(prob, 1.0, t_ref, grid=grid, stepper=step)
        error = float(np.max(np.abs(fld.values)))
        dt0 = step.dt_initial
    else:
        grid = build_graded_grid(nodes, R)
        prob = ProblemSpec(cfg.dim, epsilon, _harmonic_datum(cfg.dim), 1.0)
        step = HeatStepperConfig(dt_initial=1e-3 / factor, dt_growth=1.05)
        pair = picard_solve(prob, PicardConfig(T=t2), grid=grid, stepper=step)
        mask = (pair.v.times >= t1) & (pair.v.times <= t2)
        window = pair.v.times[mask]
        dyn_step = HeatStepperConfig(dt_initial=1e-3 * epsilon / factor, dt_growth=1.05)
        traj = solve_dynbc(prob, t2, window, grid, cfg=dyn_step)
        u_direct = np.array([traj.state_at(t).interior.values for t in window])
        u_pair = pair.u_values()[mask]
        error = float(np.max(np.abs(u_pair - u_direct)) / np.max(np.abs(u_direct)))
        dt0 = step.dt_initial

    return {
        "epsilon": float(epsilon),
        "error": error,
        "grid_nodes": nodes,
        "R": float(grid.R),
        "dt0": dt0,
        **extra,
    }


def _entry_job(args):
    cfg, epsilon, refine = args
    try:
        return _sweep_entry(cfg, epsilon, refine)
    except SolverError as err:
        return {"epsilon": float(epsilon), "failure": str(err)}


def run_sweep(cfg: SweepConfig, *, workers=None) -> RateReport:
    """Run the scenario across the ladder and fit the log-log slope.

    Failed or nonpositive entries are recorded under validation and
    excluded from the fit; more than half the ladder failing is an
    error.  Refinement flags are attached for the two extreme surviving
    epsilons.
    """
    jobs = [(cfg, e, False) for e in cfg.epsilons]
    if workers is not None and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_entry_job, jobs))
    else:
        results = [_entry_job(job) for job in jobs]

    failures = {}
    entries = []
    for res in results:
        if "failure" in res:
            failures[repr(res["epsilon"])] = res["failure"]
        elif res["error"] <= 0.0:
            failures[repr(res["epsilon"])] = f"functional nonpositive: {res['error']:.6e}"
        else:
            entries.append(res)
    if len(failures) > len(cfg.epsilons) / 2:
        raise SolverError(
            f"solver failed on {len(failures)} of {len(cfg.epsilons)} "
            f"ladder entries: {failures}"
        )

    points = [(res["epsilon"], res["error"]) for res in entries]
    slope, intercept, residual = fit_loglog(points)

    flags = {}
    by_eps = {res["epsilon"]: res for res in entries}
    for e in (max(by_eps), min(by_eps)):
        base = by_eps[e]["error"]
        refined = _sweep_entry(cfg, e, refine=True)["error"]
        shift = abs(refined - base) / abs(base)
        flags[repr(e)] = {
            "base": base,
            "refined": refined,
            "shift": shift,
            "flag": bool(shift > RICHARDSON_LIMIT),
        }
    validation = {
        "richardson": flags,
        "clear": not any(rec["flag"] for rec in flags.values()),
        "solver_failures": failures,
    }
    if cfg.scenario == "lower_rate":
        gaps = {repr(res["epsilon"]): res["comparison_gap"] for res in entries}
        validation["comparison_gaps"] = gaps
        validation["min_comparison_gap"] = min(gaps.values())

    config = {
        "scenario": cfg.scenario,
        "dim": cfg.dim,
        "epsilons": list(cfg.epsilons),
        "K_r": list(cfg.K_r),
        "t_window": list(cfg.t_window),
        "tier": cfg.tier,
        "time_lattice": TIME_LATTICE,
    }
    meta = tuple(
        {"grid_nodes": res["grid_nodes"], "R": res["R"], "dt0": res["dt0"]}
        for res in entries
    )
    return RateReport(points=tuple(points), slope=slope, intercept=intercept,
                      residual=residual, validation=validation, config=config,
                      point_meta=meta)


def emit_report(report: RateReport, path) -> tuple:
    """Write <path>.csv and <path>.json; returns the two file paths.

    CSV columns are fixed (epsilon, error, grid_nodes, R, dt0) with 17
    significant digits, so identical reports produce identical bytes.
    """
    base = str(path)
    csv_path, json_path = base + ".csv", base + ".json"
    lines = ["epsilon,error,grid_nodes,R,dt0"]
    meta = report.point_meta or tuple({} for _ in report.points)
    if len(meta) != len(report.points):
        raise ConfigError("point_meta length does not match points")
    for (e, v), m in zip(report.points, meta):
        lines.append(
            f"{e:.17g},{v:.17g},{int(m.get('grid_nodes', 0))},"
            f"{float(m.get('R', 0.0)):.17g},{float(m.get('dt0', 0.0)):.17g}"
        )
    with open(csv_path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(json_path, "w") as fh:
        fh.write(report.to_json() + "\n")
    return csv_path, json_path
