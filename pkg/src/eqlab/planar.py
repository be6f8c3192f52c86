"""Two-dimensional exterior potentials and integrals on their level curves.

Every field is the real part of a complex potential ``f(z)``, so
``grad U = (Re f', -Im f')`` and the Hessian is ``[[Re f'', -Im f''],
[-Im f'', -Re f'']]``.  Levels decrease outward; the outward normal is
``n = -grad U / E`` and the curvature ``kappa = div n`` is positive on convex
curves, with the unit circle at ``kappa = +1``.

For an exterior field carrying flux ``Phi`` the integral
``oint (kappa^2 - |D log E|^2) / E ds`` is the same on every level curve and
equals ``4 pi^2 / Phi``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .errors import BracketError, ConfigError, CriticalPoint, NonFinite, SingularPoint
from .fields import SINGULAR_TOL

TWO_PI = 2.0 * math.pi
EPS_E = 1e-10
_BISECT_REL = 1e-6


@dataclass(frozen=True)
class PlanarJet:
    value: np.ndarray
    gradient: np.ndarray
    hessian: np.ndarray


class _ComplexPotential:
    flux: float
    center: tuple

    def _derivatives(self, z: np.ndarray):  # pragma: no cover - interface
        raise NotImplementedError

    def _singular(self) -> np.ndarray:
        return np.array([complex(*self.center)])

    def _z(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        z = p[:, 0] + 1j * p[:, 1]
        if np.any(np.abs(z[:, None] - self._singular()[None, :]) <= SINGULAR_TOL):
            raise SingularPoint("evaluation point coincides with a singularity")
        return z

    def value(self, points) -> np.ndarray:
        return self._derivatives(self._z(points))[0].real

    def jet(self, points) -> PlanarJet:
        f, f1, f2 = self._derivatives(self._z(points))
        grad = np.stack([f1.real, -f1.imag], axis=-1)
        hess = np.empty(f.shape + (2, 2))
        hess[:, 0, 0] = f2.real
        hess[:, 1, 1] = -f2.real
        hess[:, 0, 1] = hess[:, 1, 0] = -f2.imag
        return PlanarJet(f.real, grad, hess)


@dataclass(frozen=True)
class LogMonopole(_ComplexPotential):
    """``U = -(Phi / 2 pi) log |z - z0|``."""

    flux: float = TWO_PI
    center: tuple = (0.0, 0.0)

    def _derivatives(self, z):
        k = -self.flux / TWO_PI
        w = z - complex(*self.center)
        return k * np.log(w), k / w, -k / (w * w)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "log_monopole", "flux": self.flux, "center": list(self.center)}


@dataclass(frozen=True)
class LogDipoleMix(_ComplexPotential):
    """``U = Re[-(Phi / 2 pi) log z + p / z]`` with complex dipole moment ``p``."""

    flux: float = TWO_PI
    dipole: tuple = (0.2, 0.0)
    center: tuple = (0.0, 0.0)

    def _derivatives(self, z):
        k = -self.flux / TWO_PI
        p = complex(*self.dipole)
        w = z - complex(*self.center)
        return k * np.log(w) + p / w, k / w - p / w**2, -k / w**2 + 2.0 * p / w**3

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "log_dipole_mix", "flux": self.flux, "dipole": list(self.dipole),
                "center": list(self.center)}


@dataclass(frozen=True)
class EllipseExterior(_ComplexPotential):
    """Exterior of the ellipse ``z = s (zeta + m / zeta)``, ``|zeta| = 1``.

    ``U = -(Phi / 2 pi) log |zeta(z)|`` vanishes on the ellipse, whose
    semi-axes are ``s (1 + m)`` and ``s (1 - m)``; levels outside are negative.
    """

    flux: float = TWO_PI
    scale: float = 1.0
    m: float = 0.3
    center: tuple = (0.0, 0.0)

    def __post_init__(self):
        if not (self.scale > 0 and 0.0 <= self.m < 1.0):
            raise ConfigError("ellipse map needs scale > 0 and 0 <= m < 1")

    @property
    def semi_axes(self) -> tuple[float, float]:
        return self.scale * (1 + self.m), self.scale * (1 - self.m)

    def _singular(self) -> np.ndarray:
        c = complex(*self.center)
        focus = 2.0 * self.scale * math.sqrt(self.m)
        return np.array([c - focus, c + focus])

    def zeta(self, z: np.ndarray) -> np.ndarray:
        w = (z - complex(*self.center)) / self.scale
        root = np.sqrt(w * w / 4.0 - self.m)
        a, b = w / 2.0 + root, w / 2.0 - root
        return np.where(np.abs(a) >= np.abs(b), a, b)

    def _derivatives(self, z):
        k = -self.flux / TWO_PI
        s, m = self.scale, self.m
        zeta = self.zeta(z)
        dz = s * (1.0 - m / zeta**2)
        d2z = 2.0 * s * m / zeta**3
        dzeta = 1.0 / dz
        d2zeta = -d2z / dz**3
        f = k * np.log(zeta)
        f1 = k * dzeta / zeta
        f2 = k * (d2zeta / zeta - (dzeta / zeta) ** 2)
        return f, f1, f2

    def exact_curve(self, level: float, t: np.ndarray) -> np.ndarray:
        """Points of the level curve at map parameter ``t``, for checks."""
        rho = math.exp(-TWO_PI * level / self.flux)
        zeta = rho * np.exp(1j * np.asarray(t))
        z = self.scale * (zeta + self.m / zeta) + complex(*self.center)
        return np.stack([z.real, z.imag], axis=-1)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "ellipse_exterior", "flux": self.flux, "scale": self.scale, "m": self.m,
                "center": list(self.center)}


PlanarField = _ComplexPotential


def planar_from_dict(spec: dict[str, Any]) -> PlanarField:
    kind = spec.get("kind") if isinstance(spec, dict) else None
    flux = float(spec.get("flux", TWO_PI)) if kind else TWO_PI
    center = tuple(spec.get("center", (0.0, 0.0))) if kind else (0.0, 0.0)
    if kind == "log_monopole":
        return LogMonopole(flux, center)
    if kind == "log_dipole_mix":
        return LogDipoleMix(flux, tuple(spec.get("dipole", (0.2, 0.0))), center)
    if kind == "ellipse_exterior":
        return EllipseExterior(flux, float(spec.get("scale", 1.0)), float(spec.get("m", 0.3)), center)
    raise ConfigError(f"unknown planar field kind {kind!r}")


# -- level curves ----------------------------------------------------------------

def spectral_derivative(values: np.ndarray) -> np.ndarray:
    """d/dt of samples on a uniform periodic grid ``t_j = 2 pi j / n`` (axis 0)."""
    n = values.shape[0]
    k = np.fft.rfftfreq(n, d=1.0 / n)
    if n % 2 == 0:
        k[-1] = 0.0
    shape = (-1,) + (1,) * (values.ndim - 1)
    return np.fft.irfft(np.fft.rfft(values, axis=0) * (1j * k).reshape(shape), n=n, axis=0)


def _radial_roots(fld: PlanarField, level: float, center: np.ndarray, dirs: np.ndarray,
                  bracket: Optional[tuple[float, float]], tol: float) -> np.ndarray:
    def g(r):
        return fld.value(center + r[:, None] * dirs) - level

    n = dirs.shape[0]
    if bracket is None:
        r0 = math.exp(-TWO_PI * level / fld.flux)
        lo, hi = np.full(n, r0 / 2.0), np.full(n, r0 * 2.0)
        for _ in range(60):
            bad = g(lo) <= 0
            if not bad.any():
                break
            lo[bad] /= 2.0
        for _ in range(60):
            bad = g(hi) >= 0
            if not bad.any():
                break
            hi[bad] *= 2.0
    else:
        lo, hi = np.full(n, float(bracket[0])), np.full(n, float(bracket[1]))
    glo, ghi = g(lo), g(hi)
    if np.any(glo * ghi > 0):
        raise BracketError(f"level {level} is not bracketed along every ray")
    while np.max((hi - lo) / hi) > _BISECT_REL:
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        left = np.sign(gm) == np.sign(glo)
        lo = np.where(left, mid, lo)
        glo = np.where(left, gm, glo)
        hi = np.where(left, hi, mid)
    r = 0.5 * (lo + hi)
    for _ in range(8):
        jet = fld.jet(center + r[:, None] * dirs)
        step = (jet.value - level) / np.sum(jet.gradient * dirs, axis=-1)
        r = r - step
        if np.max(np.abs(step) / r) < tol:
            break
    return r


@dataclass(frozen=True)
class LevelCurveGrid:
    """Uniform-angle samples of one level curve with their local geometry."""

    level: float
    flux: float
    theta: np.ndarray
    positions: np.ndarray
    tangent: np.ndarray
    normal: np.ndarray
    E: np.ndarray
    kappa: np.ndarray
    # signed tangential derivative of log E along the unit tangent
    dlogE: np.ndarray
    # |dr/dtheta|; ds = speed * 2 pi / n
    speed: np.ndarray
    ds: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return self.theta.size

    @property
    def length(self) -> float:
        return math.fsum(self.ds)

    def integrate(self, values) -> float:
        values = np.asarray(values, dtype=float)
        if not np.all(np.isfinite(values)):
            raise NonFinite("integrand has non-finite node values")
        return math.fsum(values * self.ds)

    def arc_derivative(self, values) -> np.ndarray:
        """Derivative with respect to arc length, spectral in the angle."""
        return spectral_derivative(np.asarray(values, dtype=float)) / self.speed

    def to_rows(self) -> list[dict[str, float]]:
        return [
            {"theta": float(t), "x": float(p[0]), "y": float(p[1]), "E": float(e), "kappa": float(k),
             "ds": float(d)}
            for t, p, e, k, d in zip(self.theta, self.positions, self.E, self.kappa, self.ds)
        ]

    def write(self, csv_path, json_path=None) -> None:
        cols = ["theta", "x", "y", "E", "kappa", "ds"]
        with Path(csv_path).open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=cols)
            writer.writeheader()
            for row in self.to_rows():
                writer.writerow({k: repr(v) for k, v in row.items()})
        if json_path is not None:
            payload = {"level": self.level, "n_nodes": self.n_nodes, "diagnostics": self.diagnostics}
            Path(json_path).write_text(json.dumps(payload, indent=2, sort_keys=True))


def sample_curve(fld: PlanarField, level: float, n_nodes: int = 512, *, center=None,
                 bracket: Optional[tuple[float, float]] = None, tol: float = 1e-14,
                 eps_E: float = EPS_E) -> LevelCurveGrid:
    """Sample the level curve ``U = level``, assumed star-shaped about ``center``."""
    if n_nodes < 8:
        raise ConfigError("n_nodes must be at least 8")
    c = np.asarray(fld.center if center is None else center, dtype=float)
    theta = TWO_PI * np.arange(n_nodes) / n_nodes
    dirs = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    rho = _radial_roots(fld, level, c, dirs, bracket, tol)
    pos = c + rho[:, None] * dirs
    jet = fld.jet(pos)
    g, hess = jet.gradient, jet.hessian
    E = np.linalg.norm(g, axis=-1)
    if np.any(~(E > eps_E)):
        raise CriticalPoint(f"field intensity {E.min():.3e} below threshold on level {level}")
    normal = -g / E[:, None]
    hg = (hess @ g[..., None])[..., 0]
    kappa = np.sum(g * hg, axis=-1) / E**3
    # implicit differentiation of U(c + rho w) = level
    w_t = np.stack([-dirs[:, 1], dirs[:, 0]], axis=-1)
    rho_t = -rho * np.sum(g * w_t, axis=-1) / np.sum(g * dirs, axis=-1)
    r_t = rho_t[:, None] * dirs + rho[:, None] * w_t
    speed = np.linalg.norm(r_t, axis=-1)
    tangent = r_t / speed[:, None]
    dlogE = np.sum(tangent * hg, axis=-1) / (E * E)
    ds = speed * (TWO_PI / n_nodes)
    diag = {
        "max_level_defect": float(np.max(np.abs(jet.value - level))),
        "turning": math.fsum(kappa * ds) / TWO_PI,
        "convex": bool(np.all(kappa > 0)),
        "min_E": float(E.min()),
    }
    return LevelCurveGrid(level=float(level), flux=float(fld.flux), theta=theta, positions=pos,
                          tangent=tangent, normal=normal, E=E, kappa=kappa, dlogE=dlogE, speed=speed,
                          ds=ds, diagnostics=diag)


# -- integrals ---------------------------------------------------------------------

def flux(grid: LevelCurveGrid) -> float:
    """``oint E ds``."""
    return grid.integrate(grid.E)


def conserved_integral(grid: LevelCurveGrid) -> float:
    """``oint (kappa^2 - |D log E|^2) / E ds``; independent of the level."""
    return grid.integrate((grid.kappa**2 - grid.dlogE**2) / grid.E)


def grad_product_integral(grid: LevelCurveGrid) -> float:
    """``oint D(kappa / E) . D(1 / E) ds`` with spectral tangential derivatives."""
    a = grid.arc_derivative(grid.kappa / grid.E)
    b = grid.arc_derivative(1.0 / grid.E)
    return grid.integrate(a * b)


@dataclass(frozen=True)
class VarianceIdentity:
    """Both sides of ``Var_mu(kappa / E) = E_mu |D(1/E)|^2`` with ``d mu = E ds / Phi``."""

    mean: float
    variance: float
    gradient_energy: float

    @property
    def residual(self) -> float:
        return abs(self.variance - self.gradient_energy)

    @property
    def relative(self) -> float:
        scale = max(abs(self.variance), abs(self.gradient_energy))
        return self.residual / scale if scale > 0 else self.residual


def variance_identity(grid: LevelCurveGrid) -> VarianceIdentity:
    phi = flux(grid)
    mu = grid.E * grid.ds / phi
    ratio = grid.kappa / grid.E
    mean = math.fsum(ratio * mu)
    var = math.fsum((ratio - mean) ** 2 * mu)
    d_inv_E = grid.arc_derivative(1.0 / grid.E)
    return VarianceIdentity(mean, var, math.fsum(d_inv_E**2 * mu))


def laplacian_logE_residual(fld: PlanarField, points) -> np.ndarray:
    """``| ||Hess||_F^2 E^2 - 2 |Hess grad U|^2 |`` relative to its terms; zero in 2D."""
    jet = fld.jet(points)
    E2 = np.sum(jet.gradient**2, axis=-1)
    hg = (jet.hessian @ jet.gradient[..., None])[..., 0]
    a = np.sum(jet.hessian**2, axis=(-2, -1)) * E2
    b = 2.0 * np.sum(hg * hg, axis=-1)
    return np.abs(a - b) / np.maximum(np.abs(a), np.abs(b))


@dataclass(frozen=True)
class PlanarSweep:
    levels: list
    conserved: list
    grad_products: list
    variance_relative: list
    turning: list
    fluxes: list
    convex: list
    expected: float

    @property
    def spread(self) -> float:
        c = np.asarray(self.conserved)
        return float((c.max() - c.min()) / abs(c.mean()))

    def to_dict(self) -> dict[str, Any]:
        from dataclasses import asdict

        d = asdict(self)
        d["spread"] = self.spread
        return d


def planar_sweep(fld: PlanarField, levels, n_nodes: int = 512) -> PlanarSweep:
    grids = [sample_curve(fld, lv, n_nodes) for lv in sorted(levels)]
    return PlanarSweep(
        levels=[g.level for g in grids],
        conserved=[conserved_integral(g) for g in grids],
        grad_products=[grad_product_integral(g) for g in grids],
        variance_relative=[variance_identity(g).relative for g in grids],
        turning=[g.diagnostics["turning"] for g in grids],
        fluxes=[flux(g) for g in grids],
        convex=[g.diagnostics["convex"] for g in grids],
        expected=4.0 * math.pi**2 / fld.flux,
    )
