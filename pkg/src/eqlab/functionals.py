"""Surface integrals over equipotential surfaces and level sweeps.

For a level surface with normal ``n``, intensity ``E``, mean and Gauss
curvatures ``H`` and ``K`` and tangential log-intensity gradient ``D log E``:

* ``flux      = oint E dS``
* ``W_value   = oint (H^2 - K - |D log E|^2 / 4) dS / E``
* ``F_value   = oint (4 (H^2 - K) - |D log E|^2) dS / E``  (= 4 W_value)
* ``beta      = oint <(2H I - W) D(1/E), D(1/E)> dS``

and along a sweep ``dW/dphi = -(3/2) beta``.  On strictly convex levels the
form ``2H I - W`` is negative definite on the tangent plane, so ``W`` is
non-decreasing in the level.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from .errors import NonFinite, StencilOutOfDomain
from .fields import eval_jet
from .geometry import frame, laplacian_logE, normal_logE_identity
from .levelset import (
    GridSpec,
    LevelSurfaceGrid,
    parametric_area_element,
    sample_surface,
    surface_gradient,
    surface_laplacian,
    transport_grid,
)

FOUR_PI = 4.0 * math.pi
MONOTONE_TOL = 1e-9
FD_STEP_REL = 1e-4
FLOW_STEP_REL = 1e-3


def integrate(grid: LevelSurfaceGrid, integrand) -> float:
    """``sum(integrand * dS)`` with compensated summation in node order."""
    vals = np.broadcast_to(np.asarray(integrand, dtype=float), grid.weights.shape)
    if not np.all(np.isfinite(vals)):
        raise NonFinite("integrand has non-finite node values")
    return math.fsum((vals * grid.weights).ravel())


@dataclass(frozen=True)
class LevelReport:
    level: float
    flux: float
    gauss_bonnet: float
    W_value: float
    F_value: float
    beta_integral: float
    convex: bool
    max_H: float
    min_K: float
    area: float

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def beta_form(grid: LevelSurfaceGrid, vectors: np.ndarray) -> np.ndarray:
    """``<(2H I - W) t, t>`` at each node for tangent vectors ``t``."""
    fr = grid.frames
    Wt = (fr.weingarten @ vectors[..., None])[..., 0]
    return 2.0 * fr.mean_curvature * np.sum(vectors * vectors, axis=-1) - np.sum(vectors * Wt, axis=-1)


def level_report(grid: LevelSurfaceGrid) -> LevelReport:
    """All level functionals from one pass over the grid."""
    fr = grid.frames
    E = fr.intensity
    k2 = fr.fieldline_curvature ** 2
    defect = fr.umbilic_defect
    d_inv_E = -fr.dlogE / E[..., None]
    return LevelReport(
        level=float(grid.level),
        flux=integrate(grid, E),
        gauss_bonnet=integrate(grid, fr.gauss_curvature),
        W_value=integrate(grid, (defect - 0.25 * k2) / E),
        F_value=integrate(grid, (4.0 * defect - k2) / E),
        beta_integral=integrate(grid, beta_form(grid, d_inv_E)),
        convex=grid.convex,
        max_H=float(fr.mean_curvature.max()),
        min_K=float(fr.gauss_curvature.min()),
        area=grid.area,
    )


def centered_differences(x: Sequence[float], y: Sequence[float]) -> np.ndarray:
    """Second-order derivative estimates at interior points of a non-uniform grid."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    h1 = x[1:-1] - x[:-2]
    h2 = x[2:] - x[1:-1]
    return (
        -h2 / (h1 * (h1 + h2)) * y[:-2]
        + (h2 - h1) / (h1 * h2) * y[1:-1]
        + h1 / (h2 * (h1 + h2)) * y[2:]
    )


@dataclass(frozen=True)
class SweepReport:
    levels: list
    reports: list
    dW_dphi_fd: list
    rhs_W1F1: list
    monotone: Optional[bool]
    convex: bool
    flux_spread: float
    gauss_bonnet_deviation: float
    derivative_rel_error: list
    problem: str = "exterior"
    identity_residuals: dict = field(default_factory=dict)
    # relative level step of local differences; None means differences across the sweep levels
    fd_rel: Optional[float] = None

    def _fd_at(self, i: int):
        if self.fd_rel is not None:
            return self.dW_dphi_fd[i]
        return self.dW_dphi_fd[i - 1] if 0 < i < len(self.levels) - 1 else ""

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["reports"] = [r.to_dict() for r in self.reports]
        return d

    def rows(self) -> list[dict[str, Any]]:
        out = []
        for i, r in enumerate(self.reports):
            out.append({
                "level": r.level, "flux": r.flux, "gauss_bonnet": r.gauss_bonnet,
                "W": r.W_value, "F": r.F_value, "beta": r.beta_integral,
                "dW_fd": self._fd_at(i),
                "rhs": self.rhs_W1F1[i], "convex": r.convex,
            })
        return out

    def write_csv(self, path) -> None:
        cols = ["level", "flux", "gauss_bonnet", "W", "F", "beta", "dW_fd", "rhs", "convex"]
        with Path(path).open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=cols)
            writer.writeheader()
            for row in self.rows():
                writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})

    def write_json(self, path, extra: Optional[dict] = None) -> None:
        payload = self.to_dict()
        if extra:
            payload.update(extra)
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True))


def sample_levels(field, levels, spec: GridSpec, threads: int = 1) -> list[LevelSurfaceGrid]:
    """Sample every level; per-level jobs may run on a thread pool."""
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda lv: sample_surface(field, lv, spec), levels))
    return [sample_surface(field, lv, spec) for lv in levels]


def sweep(field, levels, spec: GridSpec = GridSpec(), *, problem: str = "exterior",
          monotone_tol: float = MONOTONE_TOL, threads: int = 1,
          grids: Optional[list] = None, fd_rel: Optional[float] = None) -> SweepReport:
    """Level functionals over ``levels`` with finite-difference derivative checks.

    By default ``dW/dphi`` is the centred difference across neighbouring
    sweep levels (interior levels only).  With ``fd_rel`` every level gets a
    local centred difference from extra samples at ``level * (1 +- fd_rel)``.

    ``monotone`` is ``None`` when any level is non-convex (the monotonicity
    argument needs strict convexity), otherwise whether ``W`` is
    non-decreasing within ``monotone_tol`` and the interior derivative
    estimates are ``>= -monotone_tol``.
    """
    levels = [float(v) for v in sorted(levels)]
    if len(levels) < 3:
        raise ValueError("a sweep needs at least 3 levels")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("levels must be distinct")
    if grids is None:
        grids = sample_levels(field, levels, spec, threads)
    reports = [level_report(g) for g in grids]
    W = np.array([r.W_value for r in reports])
    rhs = [-1.5 * r.beta_integral for r in reports]
    if fd_rel is None:
        dW = centered_differences(levels, W)
        matched = rhs[1:-1]
    else:
        side = [[level_report(sample_surface(field, lv * (1.0 + s * fd_rel), spec)).W_value
                 for lv in levels] for s in (1.0, -1.0)]
        dW = (np.array(side[0]) - np.array(side[1])) / (2.0 * fd_rel * np.array(levels))
        matched = rhs
    rel = [float(abs(d - r) / max(abs(r), 1e-300)) for d, r in zip(dW, matched)]
    convex = all(r.convex for r in reports)
    if convex:
        monotone = bool(np.all(np.diff(W) >= -monotone_tol) and np.all(dW >= -monotone_tol))
    else:
        monotone = None
    fluxes = np.array([r.flux for r in reports])
    spread = float((fluxes.max() - fluxes.min()) / abs(fluxes.mean()))
    gb = max(abs(r.gauss_bonnet - FOUR_PI) for r in reports)
    return SweepReport(
        levels=levels, reports=reports, dW_dphi_fd=[float(v) for v in dW], rhs_W1F1=rhs,
        monotone=monotone, convex=convex, flux_spread=spread, gauss_bonnet_deviation=float(gb),
        derivative_rel_error=rel, problem=problem, fd_rel=fd_rel,
    )


def gauss_bonnet_invariance(field, levels, spec: GridSpec = GridSpec()) -> float:
    """``max |oint K dS - 4 pi|`` over the given levels."""
    return max(abs(integrate(g, g.frames.gauss_curvature) - FOUR_PI)
               for g in sample_levels(field, levels, spec))


def refinement_noise(field, level: float, spec: GridSpec) -> tuple[float, float]:
    """``(F_value on the refined grid, |F_coarse - F_fine|)``."""
    coarse = level_report(sample_surface(field, level, spec)).F_value
    fine = level_report(sample_surface(field, level, spec.refined())).F_value
    return fine, abs(coarse - fine)


# -- identity suite -------------------------------------------------------------

def _summary(residual: np.ndarray, *terms: np.ndarray) -> dict[str, float]:
    res = np.abs(np.asarray(residual))
    if res.ndim > 2:
        res = np.linalg.norm(res, axis=-1)
    scale = max(float(np.max(np.abs(t))) for t in terms)
    return {
        "max": float(res.max()),
        "mean": float(res.mean()),
        "scale": scale,
        "rel": float(res.max() / scale) if scale > 0 else float(res.max()),
    }


def _stencil(field, points: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Points ``x`` and ``x +- h e_k``; shape ``(7, n, 3)``."""
    sing = np.asarray(field.singular_points)
    if sing.size:
        d = np.linalg.norm(points[:, None, :] - sing[None], axis=-1).min(axis=1)
        if np.any(d <= 4.0 * h):
            raise StencilOutOfDomain("finite-difference stencil reaches a source singularity")
    offs = [np.zeros(3)] + [s * e for e in np.eye(3) for s in (1.0, -1.0)]
    return np.stack([points + h[:, None] * o for o in offs])


def _fd_laplacian(values: np.ndarray, h: np.ndarray) -> np.ndarray:
    """7-point Laplacian from stencil values of shape ``(7, n, ...)``."""
    hh = (h * h).reshape((-1,) + (1,) * (values.ndim - 2))
    return (values[1:].sum(axis=0) - 6.0 * values[0]) / hh


def _normal_and_inv_E(field, pts):
    jet = eval_jet(field, pts.reshape(-1, 3))
    g = jet.gradient
    E = np.linalg.norm(g, axis=-1)
    n = -g / E[:, None]
    shape = pts.shape[:-1]
    return n.reshape(shape + (3,)), (1.0 / E).reshape(shape)


def pointwise_fd_identities(field, points, center=(0.0, 0.0, 0.0), h_rel: float = FD_STEP_REL) -> dict:
    """Spatial finite-difference identities at arbitrary points.

    ``laplacian_n``: 7-point ``Laplacian(n)`` against
    ``2 (W - 2H) D log E - n (|D log E|^2 + 4H^2 - 2K)``.
    ``laplacian_n_over_E``: ``Laplacian(n / E)`` against
    ``4 [(2H I - W) D(1/E) + K n / E]``.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    h = h_rel * np.linalg.norm(pts - np.asarray(center), axis=-1)
    st = _stencil(field, pts, h)
    n, inv_E = _normal_and_inv_E(field, st)
    lap_n = _fd_laplacian(n, h)
    lap_nE = _fd_laplacian(n * inv_E[..., None], h)
    fr = frame(eval_jet(field, pts), position=pts)
    H, K, W, dl = fr.mean_curvature, fr.gauss_curvature, fr.weingarten, fr.dlogE
    Wdl = (W @ dl[..., None])[..., 0]
    rhs_n = 2.0 * (Wdl - 2.0 * H[:, None] * dl) - fr.normal * (
        np.sum(dl * dl, axis=-1) + 4.0 * H * H - 2.0 * K)[:, None]
    dinv = -dl / fr.intensity[:, None]
    Wd = (W @ dinv[..., None])[..., 0]
    rhs_nE = 4.0 * (2.0 * H[:, None] * dinv - Wd + (K / fr.intensity)[:, None] * fr.normal)
    return {
        "laplacian_n": _summary(lap_n - rhs_n, lap_n, rhs_n),
        "laplacian_n_over_E": _summary(lap_nE - rhs_nE, lap_nE, rhs_nE),
    }


def closed_form_identities(field, points) -> dict:
    """``n . grad log E = 2H`` and ``Laplacian log E + 2K = 0`` at points.

    Residuals are normalised per point by the magnitude of the terms.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    jet = eval_jet(field, pts)
    fr = frame(jet, position=pts)
    res_a = normal_logE_identity(fr, jet)
    lap = laplacian_logE(jet)
    res_b = np.abs(lap + 2.0 * fr.gauss_curvature)
    scale_a = np.maximum(np.abs(2.0 * fr.mean_curvature), 1e-300)
    scale_b = np.maximum(np.maximum(np.abs(lap), np.abs(2.0 * fr.gauss_curvature)), 1e-300)
    return {
        "normal_logE": {"max": float(res_a.max()), "rel": float((res_a / scale_a).max())},
        "laplacian_logE": {"max": float(res_b.max()), "rel": float((res_b / scale_b).max())},
    }


def h_evolution_residual(field, grid: LevelSurfaceGrid, dphi_rel: float = FLOW_STEP_REL,
                         steps: int = 8) -> dict:
    """``2 dH/dphi + Laplacian_S(1/E) + (4H^2 - 2K)/E`` with the flow derivative
    taken by transporting the grid nodes to ``level +- dphi``."""
    dphi = dphi_rel * grid.level
    H_pm = []
    for target in (grid.level + dphi, grid.level - dphi):
        pos = transport_grid(field, grid, target, steps)
        fr = frame(eval_jet(field, pos.reshape(-1, 3)))
        H_pm.append(fr.mean_curvature.reshape(grid.shape))
    dH = (H_pm[0] - H_pm[1]) / (2.0 * dphi)
    fr = grid.frames
    lap = surface_laplacian(grid, 1.0 / fr.intensity)
    tail = (4.0 * fr.mean_curvature ** 2 - 2.0 * fr.gauss_curvature) / fr.intensity
    return _summary(2.0 * dH + lap + tail, 2.0 * dH, lap, tail)


def area_evolution_residual(field, grid: LevelSurfaceGrid, dphi_rel: float = FLOW_STEP_REL,
                            steps: int = 8) -> dict:
    """Flow derivative of the area element against ``2 H sqrt(g) / E``.

    Coordinates are the grid's ``(theta, phi)`` carried along the flow, and
    ``sqrt(g)`` is recomputed spectrally from the transported positions.
    """
    dphi = dphi_rel * grid.level
    sg = []
    for target in (grid.level + dphi, grid.level - dphi):
        sg.append(parametric_area_element(transport_grid(field, grid, target, steps)))
    d_sg = (sg[0] - sg[1]) / (2.0 * dphi)
    base = parametric_area_element(grid.positions)
    fr = grid.frames
    expected = 2.0 * fr.mean_curvature * base / fr.intensity
    # compare per unit area so pole-adjacent nodes (small sqrt g) count fairly
    return _summary((d_sg - expected) / base, d_sg / base, expected / base)


def identity_suite(field, grid: LevelSurfaceGrid, *, h_rel: float = FD_STEP_REL,
                   dphi_rel: float = FLOW_STEP_REL, flow_steps: int = 8) -> dict:
    """Residual summaries (a)-(f) of the level-set identities on one grid.

    (a) ``n . grad log E - 2H``; (b) ``Laplacian log E + 2K``;
    (c) ``Laplacian n`` representation; (d) Weatherburn's
    ``Laplacian_S n = (2K - 4H^2) n - 2 D H``; (e) mean-curvature evolution;
    (f) ``Laplacian(n/E)`` representation.
    """
    pts = grid.positions.reshape(-1, 3)
    out = closed_form_identities(field, pts)
    fd = pointwise_fd_identities(field, pts, center=grid.spec.center, h_rel=h_rel)
    out["laplacian_n"] = fd["laplacian_n"]
    out["laplacian_n_over_E"] = fd["laplacian_n_over_E"]
    fr = grid.frames
    lap_s_n = surface_laplacian(grid, fr.normal)
    DH = surface_gradient(grid, fr.mean_curvature)
    rhs = (2.0 * fr.gauss_curvature - 4.0 * fr.mean_curvature ** 2)[..., None] * fr.normal - 2.0 * DH
    out["weatherburn"] = _summary(lap_s_n - rhs, lap_s_n, rhs)
    out["h_evolution"] = h_evolution_residual(field, grid, dphi_rel, flow_steps)
    out["area_evolution"] = area_evolution_residual(field, grid, dphi_rel, flow_steps)
    return out
