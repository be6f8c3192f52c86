"""Quadrature-ready sampling of equipotential surfaces and Gauss-Maxwell flow.

Level surfaces are extracted by ray shooting from a centre about which they
are star-shaped, on a Gauss-Legendre (in ``cos theta``) x uniform (in ``phi``)
tensor grid.  Poles are never nodes.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .errors import BracketError, ConvexityWarning, CriticalPoint, NonMonotone
from .fields import FieldJet, eval_jet, eval_value
from .geometry import EPS_E, SurfaceFrame, frame
from .spectral import d_phi, d_theta, gauss_legendre_theta

log = logging.getLogger(__name__)

RADIAL_TOL = 1e-14
FLOW_TOL = 1e-10
_BISECT_REL = 1e-6


@dataclass(frozen=True)
class GridSpec:
    """Tensor-grid resolution and ray-shooting setup.

    ``bracket=None`` asks :func:`radial_solve` to find a bracket per ray by
    geometric expansion from a monopole estimate; pass an explicit
    ``(r_min, r_max)`` whenever a ray could cross a second source (cavity
    Green's functions, for instance).
    """

    n_theta: int = 24
    n_phi: int = 48
    center: tuple = (0.0, 0.0, 0.0)
    bracket: Optional[tuple] = None

    def __post_init__(self):
        if self.n_theta < 8:
            raise ValueError("n_theta must be >= 8")
        if self.n_phi < 16:
            raise ValueError("n_phi must be >= 16")
        object.__setattr__(self, "center", tuple(float(c) for c in np.reshape(self.center, 3)))
        if self.bracket is not None:
            lo, hi = (float(b) for b in self.bracket)
            if not (lo > 0 and hi > lo):
                raise ValueError("bracket must satisfy 0 < r_min < r_max")
            object.__setattr__(self, "bracket", (lo, hi))

    def refined(self, factor: int = 2) -> "GridSpec":
        return GridSpec(self.n_theta * factor, self.n_phi * factor, self.center, self.bracket)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _ray_values(field, center, directions, radii):
    return eval_value(field, center + radii[:, None] * directions)


def _auto_bracket(field, level, center, directions):
    n = directions.shape[0]
    flux = abs(getattr(field, "flux", 1.0)) or 1.0
    guess = flux / (4.0 * math.pi * level)
    lo = np.full(n, guess)
    hi = np.full(n, guess)
    for _ in range(200):
        bad = ~(_ray_values(field, center, directions, lo) > level)
        if not bad.any():
            break
        lo[bad] *= 0.5
    for _ in range(200):
        bad = ~(_ray_values(field, center, directions, hi) < level)
        if not bad.any():
            break
        hi[bad] *= 2.0
    return lo, hi


def radial_solve(field, level: float, direction, spec: GridSpec = GridSpec(), tol: float = RADIAL_TOL):
    """Radius ``rho`` with ``U(center + rho * direction) = level``.

    ``direction`` is a unit vector or an ``(n, 3)`` array of them.  Bisection
    narrows the bracket to relative width 1e-6, then Newton polishes until
    the relative step falls below ``tol``.  Rays whose Newton iterate leaves
    the bracket fall back to bisection with a :class:`NonMonotone` warning.
    """
    directions = np.asarray(direction, dtype=float)
    single = directions.ndim == 1
    directions = directions.reshape(-1, 3)
    center = np.asarray(spec.center, dtype=float)
    n = directions.shape[0]
    if spec.bracket is None:
        lo, hi = _auto_bracket(field, level, center, directions)
    else:
        lo = np.full(n, spec.bracket[0])
        hi = np.full(n, spec.bracket[1])
    f_lo = _ray_values(field, center, directions, lo) - level
    f_hi = _ray_values(field, center, directions, hi) - level
    bad = ~((f_lo > 0) & (f_hi < 0))
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise BracketError(
            f"level {level:g} not bracketed along {directions[i]} in [{lo[i]:g}, {hi[i]:g}]"
            f" (U - level = {f_lo[i]:.3e}, {f_hi[i]:.3e})"
        )
    while True:
        active = (hi - lo) > _BISECT_REL * hi
        if not active.any():
            break
        mid = 0.5 * (lo + hi)
        f_mid = _ray_values(field, center, directions, mid) - level
        up = active & (f_mid > 0)
        down = active & ~(f_mid > 0)
        lo = np.where(up, mid, lo)
        hi = np.where(down, mid, hi)
    lo0, hi0 = lo.copy(), hi.copy()
    # roots sitting on a bracket end may be overshot by rounding
    slack = hi0 - lo0
    rho = 0.5 * (lo + hi)
    escaped = np.zeros(n, dtype=bool)
    for _ in range(30):
        jet = eval_jet(field, center + rho[:, None] * directions)
        resid = jet.value - level
        slope = np.einsum("ni,ni->n", jet.gradient, directions)
        step = np.where(escaped, 0.0, resid / slope)
        rho_new = rho - step
        out = ~escaped & ((rho_new < lo0 - slack) | (rho_new > hi0 + slack) | ~np.isfinite(rho_new))
        escaped |= out
        rho = np.where(escaped, rho, rho_new)
        if np.all(np.abs(step[~escaped]) <= tol * rho[~escaped]):
            break
    if escaped.any():
        warnings.warn(
            f"Newton left the bracket on {int(escaped.sum())} ray(s); using bisection",
            NonMonotone,
            stacklevel=2,
        )
        lo, hi = lo0[escaped], hi0[escaped]
        d = directions[escaped]
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if np.all(mid == lo) or np.all(mid == hi):
                break
            f_mid = _ray_values(field, center, d, mid) - level
            lo = np.where(f_mid > 0, mid, lo)
            hi = np.where(f_mid > 0, hi, mid)
        rho[escaped] = 0.5 * (lo + hi)
    return float(rho[0]) if single else rho


@dataclass(frozen=True)
class LevelSurfaceGrid:
    """One equipotential surface sampled on the ``(theta, phi)`` tensor grid.

    Per-node arrays have leading shape ``(n_theta, n_phi)``.  ``weights`` are
    area elements ``dS``; ``tangents[..., 0, :]`` and ``tangents[..., 1, :]``
    are ``dr/dtheta`` and ``dr/dphi``; ``metric`` is the first fundamental
    form in those coordinates.
    """

    level: float
    spec: GridSpec
    theta: np.ndarray
    phi: np.ndarray
    radii: np.ndarray
    positions: np.ndarray
    jet: FieldJet
    frames: SurfaceFrame
    sqrt_g: np.ndarray
    quad_weights: np.ndarray
    weights: np.ndarray
    tangents: np.ndarray
    metric: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int]:
        return self.positions.shape[:2]

    @property
    def area(self) -> float:
        return float(math.fsum(self.weights.ravel()))

    @property
    def convex(self) -> bool:
        return bool(self.diagnostics.get("convex", False))

    @property
    def nodes(self) -> np.ndarray:
        T, P = np.meshgrid(self.theta, self.phi, indexing="ij")
        return np.stack([T, P], axis=-1)

    def to_rows(self) -> list[dict[str, float]]:
        rows = []
        fr = self.frames
        T, P = np.meshgrid(self.theta, self.phi, indexing="ij")
        for idx in np.ndindex(*self.shape):
            x, y, z = self.positions[idx]
            rows.append({
                "theta": float(T[idx]), "phi": float(P[idx]),
                "x": float(x), "y": float(y), "z": float(z),
                "E": float(fr.intensity[idx]), "H": float(fr.mean_curvature[idx]),
                "K": float(fr.gauss_curvature[idx]), "dS": float(self.weights[idx]),
                "dlogE_norm": float(fr.fieldline_curvature[idx]),
            })
        return rows

    def sidecar(self) -> dict[str, Any]:
        return {"level": float(self.level), "spec": self.spec.to_dict(), "diagnostics": self.diagnostics}

    def write(self, csv_path, json_path=None) -> None:
        """Write the node table as CSV and the level/spec/diagnostics as JSON."""
        csv_path = Path(csv_path)
        cols = ["theta", "phi", "x", "y", "z", "E", "H", "K", "dS", "dlogE_norm"]
        with csv_path.open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=cols)
            writer.writeheader()
            for row in self.to_rows():
                writer.writerow({k: repr(v) for k, v in row.items()})
        json_path = Path(json_path) if json_path else csv_path.with_suffix(".json")
        json_path.write_text(json.dumps(self.sidecar(), indent=2, sort_keys=True))


def _angles(spec: GridSpec):
    theta, w = gauss_legendre_theta(spec.n_theta)
    phi = 2.0 * math.pi * np.arange(spec.n_phi) / spec.n_phi
    T, P = np.meshgrid(theta, phi, indexing="ij")
    st, ct, sp, cp = np.sin(T), np.cos(T), np.sin(P), np.cos(P)
    omega = np.stack([st * cp, st * sp, ct], axis=-1)
    omega_t = np.stack([ct * cp, ct * sp, -st], axis=-1)
    omega_p = np.stack([-st * sp, st * cp, np.zeros_like(T)], axis=-1)
    quad = (w / np.sin(theta))[:, None] * np.full(spec.n_phi, 2.0 * math.pi / spec.n_phi)[None, :]
    return theta, phi, omega, omega_t, omega_p, quad


def surface_from_radii(field, level, spec, radii, *, eps_E: float = EPS_E) -> LevelSurfaceGrid:
    """Assemble a :class:`LevelSurfaceGrid` from already-solved ray radii."""
    theta, phi, omega, omega_t, omega_p, quad = _angles(spec)
    center = np.asarray(spec.center)
    rho = np.asarray(radii, dtype=float).reshape(spec.n_theta, spec.n_phi)
    pos = center + rho[..., None] * omega
    flat = pos.reshape(-1, 3)
    jet = eval_jet(field, flat)
    g = jet.gradient.reshape(pos.shape)
    g_rad = np.sum(g * omega, axis=-1)
    rho_t = -rho * np.sum(g * omega_t, axis=-1) / g_rad
    rho_p = -rho * np.sum(g * omega_p, axis=-1) / g_rad
    r_t = rho_t[..., None] * omega + rho[..., None] * omega_t
    r_p = rho_p[..., None] * omega + rho[..., None] * omega_p
    sqrt_g = np.linalg.norm(np.cross(r_t, r_p), axis=-1)
    metric = np.empty(rho.shape + (2, 2))
    metric[..., 0, 0] = np.sum(r_t * r_t, axis=-1)
    metric[..., 1, 1] = np.sum(r_p * r_p, axis=-1)
    metric[..., 0, 1] = metric[..., 1, 0] = np.sum(r_t * r_p, axis=-1)
    fr = frame(jet, position=flat, eps_E=eps_E)
    shaped = {}
    for name in SurfaceFrame.__dataclass_fields__:
        arr = getattr(fr, name)
        shaped[name] = arr.reshape(rho.shape + arr.shape[1:])
    fr = SurfaceFrame(**shaped)
    jet = FieldJet(jet.value.reshape(rho.shape), g, jet.hessian.reshape(rho.shape + (3, 3)))
    defect = np.abs(jet.value - level)
    convex_nodes = fr.is_convex()
    diagnostics = {
        "max_level_defect": float(defect.max()),
        "convex": bool(convex_nodes.all()),
        "n_nonconvex_nodes": int((~convex_nodes).sum()),
        "max_H": float(fr.mean_curvature.max()),
        "min_K": float(fr.gauss_curvature.min()),
        "min_E": float(fr.intensity.min()),
        "metric_min_det": float(np.linalg.det(metric).min()),
    }
    return LevelSurfaceGrid(
        level=float(level),
        spec=spec,
        theta=theta,
        phi=phi,
        radii=rho,
        positions=pos,
        jet=jet,
        frames=fr,
        sqrt_g=sqrt_g,
        quad_weights=quad,
        weights=sqrt_g * quad,
        tangents=np.stack([r_t, r_p], axis=-2),
        metric=metric,
        diagnostics=diagnostics,
    )


def sample_surface(field, level: float, spec: GridSpec = GridSpec(), *, tol: float = RADIAL_TOL,
                   eps_E: float = EPS_E) -> LevelSurfaceGrid:
    """Sample the level surface ``U = level`` on the tensor grid of ``spec``.

    Tangents come from implicit differentiation of the ray radius, e.g.
    ``d rho / d theta = -rho (grad U . d omega/d theta) / (grad U . omega)``.
    Nodes with ``K <= 0`` or ``H >= 0`` are counted in the diagnostics and
    raise a :class:`ConvexityWarning`.
    """
    _, _, omega, _, _, _ = _angles(spec)
    rho = radial_solve(field, level, omega.reshape(-1, 3), spec, tol=tol)
    grid = surface_from_radii(field, level, spec, rho, eps_E=eps_E)
    if not grid.convex:
        warnings.warn(
            f"level {level:g}: {grid.diagnostics['n_nonconvex_nodes']} non-convex node(s)"
            f" (max H={grid.diagnostics['max_H']:.3e}, min K={grid.diagnostics['min_K']:.3e})",
            ConvexityWarning,
            stacklevel=2,
        )
    return grid


# -- surface calculus on a grid --------------------------------------------

def _trail(a: np.ndarray, like: np.ndarray) -> np.ndarray:
    return a.reshape(a.shape + (1,) * (like.ndim - 2))


def surface_gradient(grid: LevelSurfaceGrid, samples: np.ndarray) -> np.ndarray:
    """Tangential gradient ``D f = g^ij d_i f d_j r`` of a scalar node field."""
    f = np.asarray(samples, dtype=float)
    ft = d_theta(f, 1)
    fp = d_phi(f)
    ginv = np.linalg.inv(grid.metric)
    ct = ginv[..., 0, 0] * ft + ginv[..., 0, 1] * fp
    cp = ginv[..., 1, 0] * ft + ginv[..., 1, 1] * fp
    return ct[..., None] * grid.tangents[..., 0, :] + cp[..., None] * grid.tangents[..., 1, :]


def surface_laplacian(grid: LevelSurfaceGrid, samples: np.ndarray) -> np.ndarray:
    """Laplace-Beltrami operator ``(1/sqrt g) d_k (g^kl sqrt g d_l f)`` at each node.

    ``samples`` has shape ``(n_theta, n_phi)`` or ``(n_theta, n_phi, k)`` for
    componentwise application.  Theta derivatives use parity-aware spectral
    collocation, phi derivatives FFTs.
    """
    f = np.asarray(samples, dtype=float)
    ft = d_theta(f, 1)
    fp = d_phi(f)
    ginv = np.linalg.inv(grid.metric)
    sg = _trail(grid.sqrt_g, f)
    g00, g01, g11 = (_trail(ginv[..., i, j], f) for i, j in ((0, 0), (0, 1), (1, 1)))
    flux_t = sg * (g00 * ft + g01 * fp)
    flux_p = sg * (g01 * ft + g11 * fp)
    return (d_theta(flux_t, 1) + d_phi(flux_p)) / sg


# -- Gauss-Maxwell flow --------------------------------------------------------

@dataclass(frozen=True)
class FlowTrajectory:
    """Samples ``(level, position)`` along Gauss-Maxwell flow lines.

    ``positions`` has shape ``(n_samples,) + start.shape``; the last sample is
    the Newton-projected end point.
    """

    levels: np.ndarray
    positions: np.ndarray
    start_level: float
    end_level: float
    defects: np.ndarray

    @property
    def end(self) -> np.ndarray:
        return self.positions[-1]

    @property
    def samples(self) -> list[tuple[float, np.ndarray]]:
        return list(zip(self.levels.tolist(), self.positions))


class FlowAborted(CriticalPoint):
    """Critical point hit mid-trace; ``trajectory`` holds the samples so far."""

    def __init__(self, message, trajectory):
        super().__init__(message)
        self.trajectory = trajectory


def _velocity(field, pts, eps_E):
    jet = eval_jet(field, pts)
    g = jet.gradient
    E2 = np.sum(g * g, axis=-1)
    if np.any(~(np.sqrt(E2) > eps_E)):
        raise CriticalPoint("field intensity vanished along the flow")
    return g / E2[:, None]


def _project(field, pts, level, tol, iters=4):
    for _ in range(iters):
        jet = eval_jet(field, pts)
        resid = jet.value - level
        if np.all(np.abs(resid) <= tol * max(1.0, abs(level))):
            break
        E2 = np.sum(jet.gradient ** 2, axis=-1)
        pts = pts - (resid / E2)[:, None] * jet.gradient
    return pts


def flow_trace(field, start, target_level: float, steps: int = 64, *, start_level: Optional[float] = None,
               tol: float = FLOW_TOL, eps_E: float = EPS_E, project: bool = True) -> FlowTrajectory:
    """Integrate ``dr/dphi = grad U / |grad U|^2`` from ``start`` to ``target_level``.

    Classical RK4 with ``steps`` uniform steps in the level parameter, then a
    Newton projection along ``grad U`` onto the target level.  ``start`` may
    be one point or an ``(n, 3)`` batch; ``start_level`` defaults to
    ``U(start)`` (and must be common to the batch if given).
    """
    start = np.asarray(start, dtype=float)
    single = start.ndim == 1
    pts = start.reshape(-1, 3).copy()
    if start_level is None:
        vals = eval_value(field, pts)
        start_level = float(vals[0])
        if not np.allclose(vals, start_level, rtol=1e-9, atol=0.0):
            raise ValueError("batched flow starts must lie on one level")
    h = (target_level - start_level) / steps
    levels = [start_level]
    history = [pts.copy()]

    def partial(msg):
        arr = np.array(history)
        lv = np.array(levels)
        traj = FlowTrajectory(lv, arr[:, 0] if single else arr, start_level, target_level,
                              np.full(len(lv), np.nan))
        return FlowAborted(msg, traj)

    try:
        for i in range(steps):
            k1 = _velocity(field, pts, eps_E)
            k2 = _velocity(field, pts + 0.5 * h * k1, eps_E)
            k3 = _velocity(field, pts + 0.5 * h * k2, eps_E)
            k4 = _velocity(field, pts + h * k3, eps_E)
            pts = pts + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            levels.append(start_level + (i + 1) * h)
            history.append(pts.copy())
    except CriticalPoint as exc:
        raise partial(str(exc)) from exc
    if project:
        pts = _project(field, pts, target_level, tol)
        history[-1] = pts
    levels[-1] = target_level
    arr = np.array(history)
    lv = np.array(levels)
    defects = np.abs(eval_value(field, arr.reshape(-1, 3)).reshape(arr.shape[:2]) - lv[:, None])
    if single:
        arr = arr[:, 0]
        defects = defects[:, 0]
    return FlowTrajectory(lv, arr, float(start_level), float(target_level), defects)


def transport_grid(field, grid: LevelSurfaceGrid, target_level: float, steps: int = 16,
                   tol: float = FLOW_TOL) -> np.ndarray:
    """Positions of ``grid``'s nodes carried by the flow to ``target_level``."""
    traj = flow_trace(field, grid.positions.reshape(-1, 3), target_level, steps,
                      start_level=grid.level, tol=tol)
    return traj.end.reshape(grid.positions.shape)


def parametric_area_element(positions: np.ndarray) -> np.ndarray:
    """``|r_theta x r_phi|`` of positions given on the tensor grid."""
    r_t = d_theta(positions, 1)
    r_p = d_phi(positions)
    return np.linalg.norm(np.cross(r_t, r_p), axis=-1)
