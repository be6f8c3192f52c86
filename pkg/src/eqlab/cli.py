"""Command-line front end: ``eqlab <command> --config run.json --out DIR``.

Unit convention: a point charge ``q`` has potential ``q / (4 pi |r|)`` and
carries flux ``q``; the default exterior problems carry unit flux.

Exit codes: 0 success, 1 tolerance failure, 2 configuration error, 3 field
construction error, 4 non-convex level (assertions suppressed).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import re
import sys
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import __version__
from .errors import ConfigError, CriticalPoint, EqlabError, GeometryError, IllConditioned, SingularPoint
from .fields import field_from_dict
from .functionals import (
    closed_form_identities,
    h_evolution_residual,
    area_evolution_residual,
    level_report,
    pointwise_fd_identities,
    sample_levels,
    sweep,
)
from .levelset import GridSpec, flow_trace, sample_surface, surface_gradient, surface_laplacian
from .mfs import ConvexShape, solve_cavity, solve_exterior
from .planar import planar_from_dict, planar_sweep, sample_curve

EXIT_OK, EXIT_TOL, EXIT_CONFIG, EXIT_FIELD, EXIT_NONCONVEX = 0, 1, 2, 3, 4

CONVENTIONS = (
    "point charge q has potential q/(4 pi |r|) and flux q; outward normal n = -grad U / E; "
    "unit sphere has H = -1, K = 1; planar unit circle has kappa = +1"
)

DEFAULT_TOLERANCES = {
    "normal_logE": 1e-10,
    "laplacian_logE": 1e-10,
    "laplacian_n": 1e-4,
    "laplacian_n_over_E": 1e-4,
    "weatherburn": 1e-4,
    "h_evolution": 1e-4,
    "area_evolution": 1e-4,
    "sign": 1e-10,
    "monotone": 1e-9,
    "derivative": 1e-2,
    "derivative_abs": 1e-10,
    "flux_spread": 1e-7,
    "gauss_bonnet": 1e-7,
    "slope_lo": 1.9,
    "slope_hi": 2.1,
    "zero": 1e-14,
    "flow_defect": 1e-10,
    "round_trip": 1e-8,
    "mfs_residual": 1e-5,
    "conservation": 1e-6,
    "variance": 1e-6,
    "grad_product": 1e-10,
    "turning": 1e-8,
}

log = logging.getLogger("eqlab")


class FieldError(Exception):
    """Raised when a config is well formed but its field cannot be built."""


# -- configuration -------------------------------------------------------------

def _levels(spec, *, positive: bool = True) -> list[float]:
    if isinstance(spec, dict):
        kind = next((k for k in ("geometric", "linear") if k in spec), None)
        if kind is None:
            raise ConfigError("levels must be a list or {'geometric'|'linear': [start, stop, n]}")
        try:
            a, b, n = spec[kind]
            n = int(n)
        except (TypeError, ValueError):
            raise ConfigError(f"levels.{kind} must be [start, stop, n]") from None
        if n < 1:
            raise ConfigError(f"levels.{kind} needs n >= 1")
        if kind == "geometric":
            if not (a > 0 and b > 0):
                raise ConfigError(f"levels.geometric endpoints must be positive, got {a}, {b}")
            values = np.geomspace(a, b, n)
        else:
            values = np.linspace(a, b, n)
    elif isinstance(spec, (list, tuple)):
        values = spec
    else:
        raise ConfigError("levels is required")
    try:
        out = [float(v) for v in values]
    except (TypeError, ValueError):
        raise ConfigError("levels must be numbers") from None
    if not out:
        raise ConfigError("levels must be nonempty")
    if not all(math.isfinite(v) for v in out):
        raise ConfigError("levels must be finite")
    if positive and any(v <= 0 for v in out):
        bad = [v for v in out if v <= 0]
        raise ConfigError(f"levels must be positive; offending field 'levels' has {bad}")
    return sorted(out)


def _grid(config: dict, args) -> GridSpec:
    g = dict(config.get("grid", {}))
    if args.n_theta is not None:
        g["n_theta"] = args.n_theta
    if args.n_phi is not None:
        g["n_phi"] = args.n_phi
    try:
        return GridSpec(**g)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"grid: {exc}") from None


def _tolerances(config: dict, overrides: dict) -> dict:
    tol = dict(DEFAULT_TOLERANCES)
    for source in (config.get("tolerances", {}), overrides):
        for key, value in source.items():
            if key not in DEFAULT_TOLERANCES:
                raise ConfigError(f"unknown tolerance key {key!r}")
            try:
                tol[key] = float(value)
            except (TypeError, ValueError):
                raise ConfigError(f"tolerance {key!r} must be a number") from None
    return tol


def _field(config: dict):
    if "field" not in config:
        raise ConfigError("config needs a 'field' entry")
    spec = config["field"]
    if not isinstance(spec, dict) or "type" not in spec:
        raise ConfigError("field.type is required")
    try:
        return field_from_dict(spec)
    except ConfigError:
        raise
    except (GeometryError, ValueError, TypeError, NotImplementedError) as exc:
        raise FieldError(str(exc)) from exc


def _random_points(sample: dict, n: int, rng: np.random.Generator) -> np.ndarray:
    center = np.asarray(sample.get("center", (0.0, 0.0, 0.0)), dtype=float)
    r_min, r_max = float(sample.get("r_min", 0.5)), float(sample.get("r_max", 2.0))
    if not 0 < r_min < r_max:
        raise ConfigError("sample needs 0 < r_min < r_max")
    u = rng.standard_normal((n, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    r = rng.uniform(r_min, r_max, n)
    return center + r[:, None] * u


# -- report helpers ----------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def _envelope(command: str, config: dict, tol: dict, seed: int, grid: Optional[GridSpec]) -> dict:
    resolved = dict(config)
    resolved["seed"] = seed
    if grid is not None:
        resolved["grid"] = grid.to_dict()
    resolved["tolerances"] = tol
    return {"command": command, "version": __version__, "conventions": CONVENTIONS, "config": resolved,
            "seed": seed}


def _check(checks: list, name: str, ok: bool, value, limit) -> None:
    checks.append({"name": name, "pass": bool(ok), "value": value, "limit": limit})
    log.info("%s %s: %r (limit %r)", "PASS" if ok else "FAIL", name, value, limit)


def _outcome(checks: list) -> int:
    return EXIT_OK if all(c["pass"] for c in checks) else EXIT_TOL


# -- commands -------------------------------------------------------------------------

def cmd_identities(config: dict, args, tol: dict, out: Path) -> int:
    field = _field(config)
    grid_spec = _grid(config, args)
    rng = np.random.default_rng(args.seed)
    n_points = int(config.get("n_points", 1000))
    pts = _random_points(config.get("sample", {}), n_points, rng)
    report = _envelope("identities", config, tol, args.seed, grid_spec)
    checks: list = []
    cf = closed_form_identities(field, pts)
    fd = pointwise_fd_identities(field, pts, center=config.get("sample", {}).get("center", (0, 0, 0)))
    for key in ("normal_logE", "laplacian_logE"):
        _check(checks, key, cf[key]["rel"] <= tol[key], cf[key]["rel"], tol[key])
    for key in ("laplacian_n", "laplacian_n_over_E"):
        _check(checks, key, fd[key]["rel"] <= tol[key], fd[key]["rel"], tol[key])
    report["points"] = {"n": n_points, "closed_form": cf, "finite_difference": fd}
    grids = {}
    levels = _levels(config["levels"]) if "levels" in config else []
    for lv in levels:
        grid = sample_surface(field, lv, grid_spec)
        fr = grid.frames
        lap_s_n = surface_laplacian(grid, fr.normal)
        rhs = ((2.0 * fr.gauss_curvature - 4.0 * fr.mean_curvature ** 2)[..., None] * fr.normal
               - 2.0 * surface_gradient(grid, fr.mean_curvature))
        scale = max(np.abs(lap_s_n).max(), np.abs(rhs).max())
        wb = float(np.linalg.norm(lap_s_n - rhs, axis=-1).max() / scale)
        he = h_evolution_residual(field, grid)
        ae = area_evolution_residual(field, grid)
        grids[repr(lv)] = {"weatherburn": wb, "h_evolution": he, "area_evolution": ae}
        _check(checks, f"weatherburn@{lv!r}", wb <= tol["weatherburn"], wb, tol["weatherburn"])
        _check(checks, f"h_evolution@{lv!r}", he["rel"] <= tol["h_evolution"], he["rel"], tol["h_evolution"])
        _check(checks, f"area_evolution@{lv!r}", ae["rel"] <= tol["area_evolution"], ae["rel"],
               tol["area_evolution"])
    report["levels"] = grids
    report["checks"] = checks
    code = _outcome(checks)
    report["exit_code"] = code
    _write_json(out / "identities.json", report)
    return code


def _sweep_checks(result, problem: str, tol: dict, checks: list) -> None:
    F = [r.F_value for r in result.reports]
    if problem == "exterior":
        _check(checks, "F_sign", min(F) >= -tol["sign"], min(F), -tol["sign"])
    else:
        _check(checks, "F_sign", max(F) <= tol["sign"], max(F), tol["sign"])
    _check(checks, "monotone", bool(result.monotone), result.monotone, tol["monotone"])
    beta = [r.beta_integral for r in result.reports]
    _check(checks, "beta_sign", max(beta) <= tol["sign"], max(beta), tol["sign"])
    worst = 0.0
    offset = 0 if result.fd_rel is not None else 1
    for i, d in enumerate(result.dW_dphi_fd):
        rhs = result.rhs_W1F1[i + offset]
        excess = abs(d - rhs) - tol["derivative"] * abs(rhs) - tol["derivative_abs"]
        worst = max(worst, excess)
    _check(checks, "derivative", worst <= 0.0, max(result.derivative_rel_error, default=0.0),
           tol["derivative"])


def _run_sweep(field, levels, grid_spec, problem, tol, threads, checks, report, fd_rel=None):
    result = sweep(field, levels, grid_spec, problem=problem, monotone_tol=tol["monotone"], threads=threads,
                   fd_rel=fd_rel)
    report["sweep"] = result.to_dict()
    _check(checks, "flux_spread", result.flux_spread <= tol["flux_spread"], result.flux_spread,
           tol["flux_spread"])
    _check(checks, "gauss_bonnet", result.gauss_bonnet_deviation <= tol["gauss_bonnet"],
           result.gauss_bonnet_deviation, tol["gauss_bonnet"])
    if not result.convex:
        report["nonconvex_levels"] = [r.level for r in result.reports if not r.convex]
        log.warning("non-convex levels %s: sign and monotonicity assertions suppressed",
                    report["nonconvex_levels"])
        return result, False
    _sweep_checks(result, problem, tol, checks)
    return result, True


def _fd_rel(config: dict) -> Optional[float]:
    value = config.get("derivative_step")
    if value is None:
        return None
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ConfigError("derivative_step must be a number") from None
    if not 0 < value < 0.1:
        raise ConfigError("derivative_step must lie in (0, 0.1)")
    return value


def _problem(config: dict) -> str:
    problem = config.get("problem", "exterior")
    if problem not in ("exterior", "interior"):
        raise ConfigError("problem must be 'exterior' or 'interior'")
    return problem


def cmd_sweep(config: dict, args, tol: dict, out: Path) -> int:
    field = _field(config)
    problem = _problem(config)
    levels = _levels(config.get("levels"))
    if len(levels) < 3:
        raise ConfigError("a sweep needs at least 3 levels")
    grid_spec = _grid(config, args)
    report = _envelope("sweep", config, tol, args.seed, grid_spec)
    checks: list = []
    result, convex = _run_sweep(field, levels, grid_spec, problem, tol, args.threads, checks, report,
                                _fd_rel(config))
    result.write_csv(out / "sweep.csv")
    code = _outcome(checks) if convex else EXIT_NONCONVEX
    report["checks"] = checks
    report["exit_code"] = code
    _write_json(out / "sweep.json", report)
    return code


def cmd_asymptotics(config: dict, args, tol: dict, out: Path) -> int:
    field = _field(config)
    levels = _levels(config.get("levels"))
    if len(levels) < 6 or math.log10(levels[-1] / levels[0]) < 1.5 - 1e-12:
        raise ConfigError("asymptotics needs >= 6 levels spanning >= 1.5 decades")
    grid_spec = _grid(config, args)
    report = _envelope("asymptotics", config, tol, args.seed, grid_spec)
    grids = sample_levels(field, levels, grid_spec, args.threads)
    W = np.array([level_report(g).W_value for g in grids])
    report["levels"] = levels
    report["W"] = W.tolist()
    checks: list = []
    if np.all(np.abs(W) <= tol["zero"]):
        report["slope"] = None
        report["message"] = "identically zero, slope undefined"
        code = EXIT_OK
    elif np.any(W <= 0):
        report["slope"] = None
        report["message"] = "W changes sign; no power law"
        code = EXIT_TOL
    else:
        slope, intercept = np.polyfit(np.log(levels), np.log(W), 1)
        report["slope"] = float(slope)
        report["prefactor"] = float(math.exp(intercept))
        _check(checks, "slope", tol["slope_lo"] <= slope <= tol["slope_hi"], float(slope),
               [tol["slope_lo"], tol["slope_hi"]])
        code = _outcome(checks)
    report["checks"] = checks
    report["exit_code"] = code
    _write_json(out / "asymptotics.json", report)
    return code


def cmd_flow(config: dict, args, tol: dict, out: Path) -> int:
    field = _field(config)
    flow = config.get("flow")
    if not isinstance(flow, dict) or "start_level" not in flow or "target_level" not in flow:
        raise ConfigError("flow needs start_level and target_level")
    start, target = float(flow["start_level"]), float(flow["target_level"])
    if not (start > 0 and target > 0):
        raise ConfigError("flow levels must be positive")
    steps = int(flow.get("steps", 64))
    grid_spec = _grid(config, args)
    report = _envelope("flow", config, tol, args.seed, grid_spec)
    pts = sample_surface(field, start, grid_spec).positions.reshape(-1, 3)
    traj = flow_trace(field, pts, target, steps, start_level=start)
    checks: list = []
    defect = float(traj.defects[-1].max())
    _check(checks, "flow_defect", defect <= tol["flow_defect"], defect, tol["flow_defect"])
    report["end_defect"] = defect
    report["n_points"] = int(pts.shape[0])
    if flow.get("round_trip", False):
        back = flow_trace(field, traj.end, start, steps, start_level=target)
        err = float(np.linalg.norm(back.end - pts, axis=-1).max())
        report["round_trip_error"] = err
        _check(checks, "round_trip", err <= tol["round_trip"], err, tol["round_trip"])
    report["checks"] = checks
    code = _outcome(checks)
    report["exit_code"] = code
    _write_json(out / "flow.json", report)
    return code


def cmd_mfs(config: dict, args, tol: dict, out: Path) -> int:
    if "shape" not in config:
        raise ConfigError("mfs needs a 'shape' entry")
    try:
        shape = ConvexShape.from_dict(config["shape"])
    except GeometryError as exc:
        raise FieldError(str(exc)) from exc
    problem = _problem(config)
    params = dict(config.get("mfs", {}))
    unknown = set(params) - {"n_sources", "n_collocation", "inflation", "flux", "n_check"}
    if unknown:
        raise ConfigError(f"unknown mfs keys {sorted(unknown)}")
    try:
        if problem == "exterior":
            field, fit = solve_exterior(shape, seed=args.seed, residual_cap=None, threads=args.threads, **params)
        else:
            params.pop("flux", None)
            field, fit = solve_cavity(shape, seed=args.seed, residual_cap=None, threads=args.threads, **params)
    except (GeometryError, IllConditioned) as exc:
        raise FieldError(str(exc)) from exc
    grid_spec = _grid(config, args)
    if grid_spec.center == (0.0, 0.0, 0.0) and problem == "exterior":
        grid_spec = GridSpec(grid_spec.n_theta, grid_spec.n_phi, shape.center, grid_spec.bracket)
    report = _envelope("mfs", config, tol, args.seed, grid_spec)
    report["fit"] = fit.to_dict()
    checks: list = []
    _check(checks, "mfs_residual", fit.boundary_residual_max <= tol["mfs_residual"], fit.boundary_residual_max,
           tol["mfs_residual"])
    code = _outcome(checks)
    if "levels" in config:
        levels = _levels(config["levels"])
        if config.get("relative_levels", problem == "exterior"):
            levels = [lv * fit.boundary_level for lv in levels]
        if len(levels) < 3:
            raise ConfigError("a sweep needs at least 3 levels")
        result, convex = _run_sweep(field, levels, grid_spec, problem, tol, args.threads, checks, report,
                                    _fd_rel(config))
        result.write_csv(out / "sweep.csv")
        code = _outcome(checks) if convex else EXIT_NONCONVEX
    report["checks"] = checks
    report["exit_code"] = code
    _write_json(out / "mfs.json", report)
    return code


def cmd_planar(config: dict, args, tol: dict, out: Path) -> int:
    spec = config.get("planar")
    if not isinstance(spec, dict):
        raise ConfigError("planar needs a 'planar' field entry")
    try:
        fld = planar_from_dict(spec)
    except (ValueError, TypeError) as exc:
        raise FieldError(str(exc)) from exc
    levels = _levels(config.get("levels"), positive=False)
    n_nodes = int(config.get("n_nodes", 512))
    report = _envelope("planar", config, tol, args.seed, None)
    result = planar_sweep(fld, levels, n_nodes)
    report["sweep"] = result.to_dict()
    checks: list = []
    if not all(result.convex):
        report["checks"] = checks
        report["exit_code"] = EXIT_NONCONVEX
        _write_json(out / "planar.json", report)
        return EXIT_NONCONVEX
    spread = result.spread if len(levels) > 1 else 0.0
    _check(checks, "conservation", spread <= tol["conservation"], spread, tol["conservation"])
    var = max(result.variance_relative)
    _check(checks, "variance", var <= tol["variance"], var, tol["variance"])
    gp = max(result.grad_products)
    _check(checks, "grad_product", gp <= tol["grad_product"], gp, tol["grad_product"])
    turn = max(abs(t - 1.0) for t in result.turning)
    _check(checks, "turning", turn <= tol["turning"], turn, tol["turning"])
    with (out / "planar.csv").open("w") as fh:
        fh.write("level,theta,x,y,E,kappa,ds\n")
        for lv in result.levels:
            for row in sample_curve(fld, lv, n_nodes).to_rows():
                fh.write(",".join(repr(v) for v in (lv, *row.values())) + "\n")
    code = _outcome(checks)
    report["checks"] = checks
    report["exit_code"] = code
    _write_json(out / "planar.json", report)
    return code


COMMANDS = {
    "identities": cmd_identities,
    "sweep": cmd_sweep,
    "asymptotics": cmd_asymptotics,
    "flow": cmd_flow,
    "mfs": cmd_mfs,
    "planar": cmd_planar,
}


# -- entry point --------------------------------------------------------------------

_TOL_FLAG = re.compile(r"^--tol-([A-Za-z0-9_]+)=(.+)$")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eqlab",
        description="Curvature and field-intensity integrals on equipotential surfaces. Conventions: " + CONVENTIONS + ".",
        epilog="Tolerance overrides: --tol-KEY=VALUE with KEY in " + ", ".join(sorted(DEFAULT_TOLERANCES)),
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", default=".", help="output directory (created if missing)")
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--n-theta", dest="n_theta", type=int, default=None)
    parser.add_argument("--n-phi", dest="n_phi", type=int, default=None)
    return parser


def _setup_logging() -> None:
    level = os.environ.get("EQLAB_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.ERROR), format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)


def main(argv: Optional[list[str]] = None) -> int:
    _setup_logging()
    argv = list(sys.argv[1:] if argv is None else argv)
    overrides: dict[str, Any] = {}
    rest = []
    for arg in argv:
        m = _TOL_FLAG.match(arg)
        if m:
            overrides[m.group(1)] = m.group(2)
        else:
            rest.append(arg)
    parser = build_parser()
    try:
        args = parser.parse_args(rest)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        config = json.loads(Path(args.config).read_text())
        if not isinstance(config, dict):
            raise ConfigError("config must be a JSON object")
        if args.seed is None:
            args.seed = int(config.get("seed", 0))
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        tol = _tolerances(config, overrides)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        code = COMMANDS[args.command](config, args, tol, out)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"eqlab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FieldError, SingularPoint, CriticalPoint) as exc:
        print(f"eqlab: field construction error: {exc}", file=sys.stderr)
        return EXIT_FIELD
    except EqlabError as exc:
        print(f"eqlab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_TOL
    print(f"eqlab {args.command}: exit {code}")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
