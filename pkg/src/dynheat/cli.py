"""Command line front end mapping config files onto the solvers and sweeps.

Config files are plain text, one key=value pair per line, with # starting
a comment.  Each subcommand reads only the keys its handler declares;
unknown keys are rejected so typos fail loudly instead of silently
falling back to defaults.  Exit codes: 0 success, 1 a gated check
failed, 2 bad configuration or arguments, 3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from dynheat import __version__
from dynheat.analysis import ConvolutionSupParams, convolution_sup, find_damping_L
from dynheat.dynbc import (
    ProblemSpec,
    error_vs_limit,
    solve_dynbc,
    truncation_radius,
)
from dynheat.errors import ConfigError, NonConvergenceError, SolverError
from dynheat.harness import (
    SCENARIOS,
    RateReport,
    SweepConfig,
    default_ladder,
    emit_report,
    run_sweep,
)
from dynheat.kernels import KernelContext, evolving_kernel, kernel_mass
from dynheat.limit_semigroup import limit_profile
from dynheat.lower_bound import LowerBoundSpec, decay_certificate, lower_rate_report
from dynheat.picard import PicardConfig, picard_solve
from dynheat.radial_heat import HeatStepperConfig, build_graded_grid
from dynheat.sphere_quadrature import build_rule, integrate

# quadrature levels matching the accuracy of the mass-law test matrix
MASS_CHECK_LEVELS = {3: 4, 4: 3}
MASS_CHECK_TIMES = (0.0, 0.5, 1.0)
MASS_CHECK_RADII = (1.5, 2.0, 4.0)


def parse_config(path) -> dict:
    """Read a key=value config file into a string-valued dict."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not sep or not key or not val:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        if key in out:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = val
    return out


def _load_config(path, allowed) -> dict:
    if path is None:
        return {}
    cfg = parse_config(path)
    unknown = sorted(set(cfg) - set(allowed))
    if unknown:
        raise ConfigError(
            f"{path}: unknown keys {unknown}; this subcommand reads {sorted(allowed)}"
        )
    return cfg


def _cfloat(cfg, key, default):
    if key not in cfg:
        return default
    try:
        return float(cfg[key])
    except ValueError as exc:
        raise ConfigError(f"key {key!r} must be a float, got {cfg[key]!r}") from exc


def _cint(cfg, key, default):
    if key not in cfg:
        return default
    try:
        return int(cfg[key])
    except ValueError as exc:
        raise ConfigError(f"key {key!r} must be an integer, got {cfg[key]!r}") from exc


def _cfloats(cfg, key):
    """Comma-separated float list, or None when the key is absent."""
    if key not in cfg:
        return None
    try:
        values = tuple(float(tok) for tok in cfg[key].split(",") if tok.strip())
    except ValueError as exc:
        raise ConfigError(f"key {key!r} must be comma-separated floats") from exc
    if not values:
        raise ConfigError(f"key {key!r} is empty")
    return values


def _cstr(cfg, key, default, choices=None):
    val = cfg.get(key, default)
    if choices is not None and val not in choices:
        raise ConfigError(f"key {key!r} must be one of {tuple(choices)}, got {val!r}")
    return val


def _parse_float_list(text, flag):
    try:
        values = tuple(float(tok) for tok in text.split(",") if tok.strip())
    except ValueError as exc:
        raise ConfigError(f"{flag} must be comma-separated floats, got {text!r}") from exc
    if not values:
        raise ConfigError(f"{flag} is empty")
    return values


def _harmonic_datum(dim: int):
    def phi(r):
        return np.asarray(r, dtype=float) ** (2.0 - dim)

    return phi


def _grid_from(cfg, epsilon, t_max, default_nodes):
    nodes = _cint(cfg, "grid_nodes", default_nodes)
    sigma = _cfloat(cfg, "grading_sigma", 3.0)
    cap = _cfloat(cfg, "R_policy", 1e4)
    return build_graded_grid(nodes, truncation_radius(epsilon, t_max, cap), sigma=sigma)


def _stepper_from(cfg, epsilon):
    # physical-scale stepping: initial step dt0_factor * epsilon
    return HeatStepperConfig(
        theta=_cfloat(cfg, "theta", 0.5),
        dt_initial=_cfloat(cfg, "dt0_factor", 1e-3) * epsilon,
        dt_growth=_cfloat(cfg, "dt_growth", 1.05),
    )


def _write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _cmd_kernels_check(args) -> int:
    dims = tuple(int(d) for d in _parse_float_list(args.dims, "--dims"))
    if any(d < 3 for d in dims):
        raise ConfigError(f"--dims entries must be >= 3, got {dims}")
    per_dim = {}
    for dim in dims:
        ctx = KernelContext(dim)
        rule = build_rule(dim, MASS_CHECK_LEVELS.get(dim, 2))
        x = np.zeros(dim)
        worst = 0.0
        for t in MASS_CHECK_TIMES:
            for rad in MASS_CHECK_RADII:
                x[0] = rad
                val = integrate(rule, lambda nodes: evolving_kernel(ctx, x, nodes, t))
                exact = kernel_mass(ctx, rad, t)
                worst = max(worst, abs(val - exact) / exact)
        per_dim[dim] = worst
        print(f"dim {dim}: max rel mass error {worst:.3e}")
    overall = max(per_dim.values())
    ok = overall < args.tol
    if args.out:
        _write_json(
            args.out,
            {
                "dims": list(dims),
                "times": list(MASS_CHECK_TIMES),
                "radii": list(MASS_CHECK_RADII),
                "tol": args.tol,
                "per_dim": {str(d): e for d, e in per_dim.items()},
                "max_rel_error": overall,
                "pass": bool(ok),
            },
        )
        print(f"wrote {args.out}")
    print(f"kernels-check: {'pass' if ok else 'FAIL'} "
          f"(max rel error {overall:.3e}, tol {args.tol:g})")
    return 0 if ok else 1


def _cmd_limit_eval(args) -> int:
    radii = _parse_float_list(args.radii, "--r")
    times = _parse_float_list(args.times, "--t")
    rows = [[float(v) for v in limit_profile(args.dim, args.phi_b, radii, t)]
            for t in times]
    print(f"dim {args.dim}  phi_b {args.phi_b:g}  r {list(radii)}")
    for t, row in zip(times, rows):
        print(f"t={t:g}: " + "  ".join(f"{v:.10g}" for v in row))
    if args.out:
        _write_json(
            args.out,
            {
                "dim": args.dim,
                "phi_b": args.phi_b,
                "r": list(radii),
                "t": list(times),
                "values": rows,
            },
        )
        print(f"wrote {args.out}")
    return 0


_SOLVE_KEYS = (
    "dim", "epsilon", "phi_b", "t1", "t2", "K_r_min", "K_r_max",
    "grid_nodes", "grading_sigma", "R_policy", "theta", "dt0_factor", "dt_growth",
)


def _cmd_solve(args) -> int:
    cfg = _load_config(args.config, _SOLVE_KEYS)
    dim = _cint(cfg, "dim", 3)
    epsilon = _cfloat(cfg, "epsilon", 0.1)
    phi_b = _cfloat(cfg, "phi_b", 1.0)
    t1 = _cfloat(cfg, "t1", 1.0)
    t2 = _cfloat(cfg, "t2", 2.0)
    k_r = (_cfloat(cfg, "K_r_min", 1.5), _cfloat(cfg, "K_r_max", 2.0))
    spec = ProblemSpec(dim, epsilon, _harmonic_datum(dim), phi_b)
    grid = _grid_from(cfg, epsilon, t2, default_nodes=1500)
    stepper = _stepper_from(cfg, epsilon)
    sample_times = np.linspace(t1, t2, 9)
    traj = solve_dynbc(spec, t2, sample_times, grid, stepper)
    err = error_vs_limit(traj, spec, k_r, (t1, t2))
    boundary = [float(state.boundary_value) for state in traj.states]
    print(f"dim {dim}  epsilon {epsilon:g}  grid {grid.r.size} nodes  "
          f"R {float(grid.r[-1]):.6g}")
    print(f"sup error vs limit on K_r {list(k_r)} x [{t1:g}, {t2:g}]: {err:.10g}")
    print(f"boundary value at t={float(traj.times[-1]):g}: {boundary[-1]:.10g}")
    if args.out:
        csv_path = f"{args.out}.csv"
        lines = ["time,boundary_value"]
        lines += [f"{float(t):.17g},{b:.17g}" for t, b in zip(traj.times, boundary)]
        Path(csv_path).write_text("\n".join(lines) + "\n")
        _write_json(
            f"{args.out}.json",
            {
                "dim": dim,
                "epsilon": epsilon,
                "phi_b": phi_b,
                "t_window": [t1, t2],
                "K_r": list(k_r),
                "grid_nodes": int(grid.r.size),
                "R": float(grid.r[-1]),
                "times": [float(t) for t in traj.times],
                "boundary_values": boundary,
                "window_error": float(err),
                "boundary_residual_max": float(traj.boundary_residual_max),
            },
        )
        print(f"wrote {csv_path} {args.out}.json")
    return 0


_SWEEP_KEYS = (
    "scenario", "dim", "tier", "epsilon_ladder",
    "K_r_min", "K_r_max", "t1", "t2", "workers",
)


def _cmd_sweep(args) -> int:
    cfg = _load_config(args.config, _SWEEP_KEYS)
    tier = _cstr(cfg, "tier", "standard")
    ladder = _cfloats(cfg, "epsilon_ladder") or default_ladder(tier)
    sweep_cfg = SweepConfig(
        scenario=_cstr(cfg, "scenario", "upper_rate", choices=SCENARIOS),
        dim=_cint(cfg, "dim", 3),
        epsilons=ladder,
        K_r=(_cfloat(cfg, "K_r_min", 1.5), _cfloat(cfg, "K_r_max", 2.0)),
        t_window=(_cfloat(cfg, "t1", 1.0), _cfloat(cfg, "t2", 2.0)),
        tier=tier,
    )
    workers = args.workers if args.workers is not None else _cint(cfg, "workers", None)
    report = run_sweep(sweep_cfg, workers=workers)
    csv_path, json_path = emit_report(report, args.out)
    failures = report.validation.get("solver_failures", {})
    print(f"scenario {sweep_cfg.scenario}  dim {sweep_cfg.dim}  tier {tier}  "
          f"points {len(report.points)}")
    print(f"slope {report.slope:.10g}  intercept {report.intercept:.10g}  "
          f"residual {report.residual:.3e}")
    print(f"richardson clear: {report.validation.get('clear')}  "
          f"solver failures: {len(failures)}")
    print(f"wrote {csv_path} {json_path}")
    return 0


_PICARD_KEYS = ("dim", "epsilon", "phi_b", "T", "L", "max_iter", "tol", "alpha")


def _cmd_picard(args) -> int:
    cfg = _load_config(args.config, _PICARD_KEYS)
    dim = _cint(cfg, "dim", 3)
    epsilon = _cfloat(cfg, "epsilon", 0.1)
    phi_b = _cfloat(cfg, "phi_b", 1.0)
    pcfg = PicardConfig(
        T=_cfloat(cfg, "T", 1.0),
        L=_cfloat(cfg, "L", None),
        max_iter=_cint(cfg, "max_iter", 40),
        tol=_cfloat(cfg, "tol", 1e-8),
        alpha=_cfloat(cfg, "alpha", None),
    )
    spec = ProblemSpec(dim, epsilon, _harmonic_datum(dim), phi_b)
    pair = picard_solve(spec, pcfg)
    meta = pair.meta
    increments = [float(v) for v in meta["increments"]]
    print(f"dim {dim}  epsilon {epsilon:g}  horizon {pcfg.T:g}")
    print(f"converged in {meta['iterations']} iterations  L {meta['L']:g}  "
          f"contraction ratio {meta['contraction_ratio']:.6g}")
    for k, inc in enumerate(increments, 1):
        print(f"  iter {k}: increment {inc:.6e}")
    if args.out:
        _write_json(
            args.out,
            {
                "dim": dim,
                "epsilon": epsilon,
                "phi_b": phi_b,
                "T": pcfg.T,
                "L": float(meta["L"]),
                "iterations": int(meta["iterations"]),
                "contraction_ratio": float(meta["contraction_ratio"]),
                "increments": increments,
                "grid_nodes": int(meta["grid_nodes"]),
                "R": float(meta["R"]),
            },
        )
        print(f"wrote {args.out}")
    return 0


_LOWER_KEYS = (
    "dim", "b", "K_r_min", "K_r_max", "t1", "t2", "epsilon_ladder",
    "n_times", "grid_nodes", "workers", "cert_t1", "cert_t2",
)


def _cmd_lower_bound(args) -> int:
    cfg = _load_config(args.config, _LOWER_KEYS)
    spec = LowerBoundSpec(
        _cint(cfg, "dim", 3),
        b=_cfloat(cfg, "b", 2.0),
        K_r=(_cfloat(cfg, "K_r_min", 1.5), _cfloat(cfg, "K_r_max", 2.0)),
        t_window=(_cfloat(cfg, "t1", 1.0), _cfloat(cfg, "t2", 2.0)),
    )
    # lower_rate_report demands a 1.5-decade ladder; the thorough tier is
    # the shortest default that satisfies it
    ladder = _cfloats(cfg, "epsilon_ladder") or default_ladder("thorough")
    cert_window = (_cfloat(cfg, "cert_t1", 1.0), _cfloat(cfg, "cert_t2", 1e3))
    certificate = decay_certificate(spec, cert_window)
    print(f"decay certificate on t in [{cert_window[0]:g}, {cert_window[1]:g}]: "
          f"{certificate:.10g}")
    workers = args.workers if args.workers is not None else _cint(cfg, "workers", None)
    report = lower_rate_report(
        spec,
        ladder,
        n_times=_cint(cfg, "n_times", 9),
        grid_nodes=_cint(cfg, "grid_nodes", 1500),
        workers=workers,
    )
    csv_path, json_path = emit_report(report, args.out)
    print(f"dim {spec.dim}  points {len(report.points)}  "
          f"slope {report.slope:.10g}  residual {report.residual:.3e}")
    print(f"min comparison gap: {report.validation.get('min_comparison_gap'):.6g}")
    cert_path = f"{args.out}.cert.json"
    _write_json(
        cert_path,
        {
            "dim": spec.dim,
            "b": spec.b,
            "K_r": list(spec.K_r),
            "t_range": list(cert_window),
            "certificate": float(certificate),
        },
    )
    print(f"wrote {csv_path} {json_path} {cert_path}")
    return 0


_ANALYSIS_KEYS = ("a", "b", "gamma", "T", "delta")


def _cmd_analysis(args) -> int:
    cfg = _load_config(args.config, _ANALYSIS_KEYS)
    params = ConvolutionSupParams(
        _cfloat(cfg, "a", 0.25),
        _cfloat(cfg, "b", 0.25),
        _cfloat(cfg, "gamma", 1.0),
        _cfloat(cfg, "T", 1.0),
        _cfloat(cfg, "delta", 0.1),
    )
    l_star = find_damping_L(params)
    trace = []
    level = 1.0
    while level <= l_star:
        trace.append([level, convolution_sup(params, level)])
        level *= 2.0
    print(f"a {params.a:g}  b {params.b:g}  gamma {params.gamma:g}  "
          f"T {params.T:g}  delta {params.delta:g}")
    for level, sup in trace:
        print(f"  L {level:g}: sup {sup:.10g}")
    print(f"L* = {l_star:g}  sup(L*) = {trace[-1][1]:.10g}")
    if args.out:
        _write_json(
            args.out,
            {
                "a": params.a,
                "b": params.b,
                "gamma": params.gamma,
                "T": params.T,
                "delta": params.delta,
                "L_star": float(l_star),
                "sup_at_L_star": trace[-1][1],
                "trace": trace,
            },
        )
        print(f"wrote {args.out}")
    return 0


def _cmd_report(args) -> int:
    try:
        text = Path(args.json).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read report {args.json}: {exc}") from exc
    try:
        report = RateReport.from_json(text)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{args.json} is not a rate report: {exc}") from exc
    config = report.config
    failures = report.validation.get("solver_failures", {})
    print(f"scenario {config.get('scenario', '?')}  dim {config.get('dim', '?')}  "
          f"points {len(report.points)}")
    print(f"slope {report.slope:.10g}  intercept {report.intercept:.10g}  "
          f"residual {report.residual:.3e}")
    print(f"richardson clear: {report.validation.get('clear')}  "
          f"solver failures: {len(failures)}")
    if args.out:
        csv_path, json_path = emit_report(report, args.out)
        print(f"wrote {csv_path} {json_path}")
    rc = 0
    if args.min_slope is not None and not report.slope >= args.min_slope:
        print(f"gate FAIL: slope {report.slope:.10g} < {args.min_slope:g}")
        rc = 1
    if args.max_slope is not None and not report.slope <= args.max_slope:
        print(f"gate FAIL: slope {report.slope:.10g} > {args.max_slope:g}")
        rc = 1
    if args.require_clear and not report.validation.get("clear", False):
        print("gate FAIL: richardson refinement not clear")
        rc = 1
    if rc == 0 and (args.min_slope is not None or args.max_slope is not None
                    or args.require_clear):
        print("gates pass")
    return rc


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dynheat",
        description="solvers and rate sweeps for exterior heat flow with a "
                    "dynamical boundary condition",
    )
    parser.add_argument("--version", action="version",
                        version=f"dynheat {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("kernels-check",
                       help="quadrature mass of the evolved kernel vs closed form")
    p.add_argument("--dims", default="3,4,5", help="comma-separated dimensions")
    p.add_argument("--tol", type=float, default=1e-6, help="relative gate")
    p.add_argument("--out", default=None, help="JSON output path")
    p.set_defaults(func=_cmd_kernels_check)

    p = sub.add_parser("limit-eval", help="closed-form limit profile values")
    p.add_argument("--dim", type=int, default=3)
    p.add_argument("--phi-b", type=float, default=1.0, dest="phi_b")
    p.add_argument("--r", default="1.5,2,4", dest="radii",
                   help="comma-separated radii >= 1")
    p.add_argument("--t", default="0,0.5,1", dest="times",
                   help="comma-separated times")
    p.add_argument("--out", default=None, help="JSON output path")
    p.set_defaults(func=_cmd_limit_eval)

    p = sub.add_parser("solve", help="direct stiff solve on a sample window")
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--out", default=None,
                   help="output basename (writes .csv and .json)")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("sweep", help="epsilon ladder sweep with rate fit")
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--out", required=True,
                   help="output basename (writes .csv and .json)")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("picard", help="fixed-point solve with iteration trace")
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--out", default=None, help="JSON output path")
    p.set_defaults(func=_cmd_picard)

    p = sub.add_parser("lower-bound",
                       help="decay certificate plus lower-rate ladder")
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--out", required=True,
                   help="output basename (writes .csv, .json, .cert.json)")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=_cmd_lower_bound)

    p = sub.add_parser("analysis", help="weighted convolution damping search")
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--out", default=None, help="JSON output path")
    p.set_defaults(func=_cmd_analysis)

    p = sub.add_parser("report", help="summarize or gate a stored rate report")
    p.add_argument("--json", required=True, help="report JSON path")
    p.add_argument("--out", default=None,
                   help="re-emit basename (writes .csv and .json)")
    p.add_argument("--min-slope", type=float, default=None, dest="min_slope")
    p.add_argument("--max-slope", type=float, default=None, dest="max_slope")
    p.add_argument("--require-clear", action="store_true", dest="require_clear")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NonConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        for key, val in exc.diagnostics.items():
            print(f"  {key}: {val}", file=sys.stderr)
        return 3
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        # bad numeric input fed straight into a kernel or grid builder
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
