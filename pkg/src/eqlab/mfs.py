"""Method of fundamental solutions for convex bodies.

Exterior fits place point sources on a shrunken copy of the boundary and
solve for strengths matching ``U = 1`` on collocation nodes; the ensemble is
then rescaled to the requested flux.  Cavity fits keep a unit charge at the
origin and place correction charges on an inflated copy so that ``G = 0`` on
the boundary.

Both systems are solved by SVD-based least squares after scaling every column
to unit norm; the singular values give the condition estimate for free.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Optional

import numpy as np

from .errors import ConfigError, GeometryError, IllConditioned, OriginOutside, ResidualTooLarge
from .fields import FOUR_PI, ChargeEnsemble

RESIDUAL_CAP = 1e-5
CONDITION_CAP = 1e14
N_CHECK = 10_000
_GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


def fibonacci_sphere(n: int) -> np.ndarray:
    """``n`` nearly equal-area unit vectors on the Fibonacci spiral."""
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - z * z)
    phi = _GOLDEN_ANGLE * i
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)


@dataclass(frozen=True)
class ConvexShape:
    """Ellipsoid or superellipsoid ``sum |(x_i - c_i) / a_i|^p = 1``.

    ``p = 2`` is the ellipsoid.  Sphere directions map to the boundary by the
    affine map ``u -> a * u`` for ellipsoids and by radial projection for
    superellipsoids, which keeps the node density roughly uniform in both cases.
    """

    axes: tuple[float, float, float]
    p: float = 2.0
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        axes = tuple(float(a) for a in self.axes)
        center = tuple(float(c) for c in self.center)
        if len(axes) != 3 or not all(a > 0 and math.isfinite(a) for a in axes):
            raise GeometryError(f"semi-axes must be three positive numbers, got {self.axes}")
        if len(center) != 3:
            raise GeometryError("center must have three components")
        if not float(self.p) >= 2.0:
            raise GeometryError(f"superellipsoid exponent must be >= 2 for convexity, got {self.p}")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "p", float(self.p))

    @classmethod
    def ellipsoid(cls, a: float, b: float, c: float, center=(0.0, 0.0, 0.0)) -> "ConvexShape":
        return cls((a, b, c), 2.0, tuple(center))

    @classmethod
    def sphere(cls, radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> "ConvexShape":
        return cls((radius, radius, radius), 2.0, tuple(center))

    @property
    def kind(self) -> str:
        return "ellipsoid" if self.p == 2.0 else "superellipsoid"

    def _local(self, directions: np.ndarray) -> np.ndarray:
        a = np.asarray(self.axes)
        if self.p == 2.0:
            u = directions / np.linalg.norm(directions, axis=-1, keepdims=True)
            return u * a
        s = np.sum(np.abs(directions / a) ** self.p, axis=-1) ** (1.0 / self.p)
        return directions / s[..., None]

    def boundary(self, directions: np.ndarray, scale: float = 1.0) -> np.ndarray:
        """Boundary points for ``directions``, optionally on a scaled copy about the center."""
        return np.asarray(self.center) + scale * self._local(np.asarray(directions, dtype=float))

    def normals(self, points: np.ndarray) -> np.ndarray:
        """Outward unit normals at boundary ``points``."""
        a = np.asarray(self.axes)
        x = (np.asarray(points, dtype=float) - np.asarray(self.center)) / a
        g = np.sign(x) * np.abs(x) ** (self.p - 1.0) / a
        return g / np.linalg.norm(g, axis=-1, keepdims=True)

    def sample(self, n: int, scale: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
        """``n`` Fibonacci nodes on the (scaled) boundary and their outward normals."""
        pts = self.boundary(fibonacci_sphere(n), scale)
        return pts, self.normals(np.asarray(self.center) + (pts - np.asarray(self.center)) / scale)

    def random_boundary(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.boundary(rng.standard_normal((n, 3)))

    def level_function(self, points: np.ndarray) -> np.ndarray:
        """``sum |x_i / a_i|^p``: below 1 inside, above 1 outside."""
        x = (np.asarray(points, dtype=float) - np.asarray(self.center)) / np.asarray(self.axes)
        return np.sum(np.abs(x) ** self.p, axis=-1)

    def contains(self, point, margin: float = 0.0) -> bool:
        return bool(self.level_function(np.asarray(point, dtype=float)) < 1.0 - margin)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "axes": list(self.axes), "p": self.p, "center": list(self.center)}

    @classmethod
    def from_dict(cls, spec: dict[str, Any]) -> "ConvexShape":
        try:
            kind = spec.get("kind", "ellipsoid")
            axes = tuple(spec["axes"])
        except (AttributeError, KeyError):
            raise ConfigError("shape.axes is required") from None
        if kind == "ellipsoid":
            p = 2.0
        elif kind == "superellipsoid":
            p = float(spec.get("p", 4.0))
        else:
            raise ConfigError(f"unknown shape.kind {kind!r}")
        return cls(axes, p, tuple(spec.get("center", (0.0, 0.0, 0.0))))


@dataclass(frozen=True)
class FitReport:
    """Quality of a least-squares source fit, measured on a fresh check set."""

    boundary_residual_max: float
    boundary_residual_rms: float
    condition_estimate: float
    n_sources: int
    n_collocation: int
    n_check: int
    # potential on the boundary after flux rescaling (exterior) or 0 (cavity)
    boundary_level: float
    seed: int
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _kernel(targets: np.ndarray, sources: np.ndarray, threads: int = 1, block: int = 1024) -> np.ndarray:
    """Matrix ``1 / (4 pi |t_i - s_j|)`` assembled in row blocks."""
    out = np.empty((targets.shape[0], sources.shape[0]))

    def fill(start):
        sl = slice(start, start + block)
        out[sl] = 1.0 / (FOUR_PI * np.linalg.norm(targets[sl, None, :] - sources[None], axis=-1))

    starts = range(0, targets.shape[0], block)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(fill, starts))
    else:
        for s in starts:
            fill(s)
    return out


def _lstsq(A: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, float]:
    norms = np.linalg.norm(A, axis=0)
    norms[norms == 0] = 1.0
    y, _, _, sv = np.linalg.lstsq(A / norms, b, rcond=None)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf
    return y / norms, cond


def _validate(n_sources: int, n_collocation: Optional[int]) -> int:
    if n_sources < 1:
        raise ConfigError("n_sources must be positive")
    if n_collocation is None:
        n_collocation = 4 * n_sources
    if n_collocation < 2 * n_sources:
        raise ConfigError("n_collocation must be at least twice n_sources")
    return int(n_collocation)


def _finish(residual, cond, n_sources, n_collocation, n_check, level, seed, residual_cap, condition_cap, extra):
    report = FitReport(
        boundary_residual_max=float(np.max(np.abs(residual))),
        boundary_residual_rms=float(np.sqrt(np.mean(residual * residual))),
        condition_estimate=cond,
        n_sources=n_sources,
        n_collocation=n_collocation,
        n_check=n_check,
        boundary_level=level,
        seed=seed,
        extra=extra,
    )
    if not cond <= condition_cap:
        raise IllConditioned(
            f"condition estimate {cond:.2e} exceeds {condition_cap:.0e}; use fewer sources or move them "
            "closer to the boundary"
        )
    if residual_cap is not None and report.boundary_residual_max > residual_cap:
        raise ResidualTooLarge(
            f"boundary residual {report.boundary_residual_max:.2e} exceeds cap {residual_cap:.1e}"
        )
    return report


def solve_exterior(shape: ConvexShape, flux: float = 1.0, n_sources: int = 256,
                   n_collocation: Optional[int] = None, inflation: float = 0.6, *, seed: int = 0,
                   n_check: int = N_CHECK, residual_cap: Optional[float] = RESIDUAL_CAP,
                   condition_cap: float = CONDITION_CAP, threads: int = 1) -> tuple[ChargeEnsemble, FitReport]:
    """Fit the equilibrium potential outside ``shape`` carrying ``flux``.

    Sources sit on the boundary shrunk by ``inflation`` about the shape
    center, plus one at the center itself so that a sphere is fitted exactly
    by a single charge.  The residual reported is ``|U / U_boundary - 1|``.
    """
    n_collocation = _validate(n_sources, n_collocation)
    if not 0.0 < inflation < 1.0:
        raise ConfigError("exterior inflation must lie in (0, 1)")
    if not flux > 0:
        raise ConfigError("flux must be positive")
    center = np.asarray(shape.center)
    sources = np.vstack([center, shape.sample(n_sources, inflation)[0]])
    colloc, _ = shape.sample(n_collocation)
    q, cond = _lstsq(_kernel(colloc, sources, threads), np.ones(n_collocation))
    total = math.fsum(q)
    if not total > 0:
        raise IllConditioned("fitted ensemble has non-positive total charge")
    rng = np.random.default_rng(seed)
    check = shape.random_boundary(n_check, rng)
    residual = _kernel(check, sources, threads) @ q - 1.0
    strengths = q * (flux / total)
    ensemble = ChargeEnsemble(sources, strengths)
    report = _finish(residual, cond, n_sources, n_collocation, n_check, flux / total, seed,
                     residual_cap, condition_cap, {"inflation": inflation, "flux": flux})
    return ensemble, report


def solve_cavity(shape: ConvexShape, n_sources: int = 256, n_collocation: Optional[int] = None,
                 inflation: float = 1.7, *, seed: int = 0, n_check: int = N_CHECK,
                 residual_cap: Optional[float] = RESIDUAL_CAP, condition_cap: float = CONDITION_CAP,
                 threads: int = 1) -> tuple[ChargeEnsemble, FitReport]:
    """Green's function of the cavity ``shape`` with its pole at the origin.

    The correction is a sum of charges on the boundary inflated by
    ``inflation`` about the shape center plus a harmonic constant, so a
    centred sphere is represented exactly.  The residual is ``|G|`` on the
    boundary.
    """
    n_collocation = _validate(n_sources, n_collocation)
    if not inflation > 1.0:
        raise ConfigError("cavity inflation must exceed 1")
    if not shape.contains(np.zeros(3), margin=1e-9):
        raise OriginOutside(f"origin is not strictly inside the shape {shape.to_dict()}")
    sources = shape.sample(n_sources, inflation)[0]
    colloc, _ = shape.sample(n_collocation)
    pole = 1.0 / (FOUR_PI * np.linalg.norm(colloc, axis=-1))
    A = np.hstack([_kernel(colloc, sources, threads), np.ones((n_collocation, 1))])
    coef, cond = _lstsq(A, -pole)
    q, offset = coef[:-1], float(coef[-1])
    rng = np.random.default_rng(seed)
    check = shape.random_boundary(n_check, rng)
    residual = _kernel(check, sources, threads) @ q + offset + 1.0 / (FOUR_PI * np.linalg.norm(check, axis=-1))
    ensemble = ChargeEnsemble(np.vstack([np.zeros(3), sources]), np.concatenate([[1.0], q]), offset=offset)
    report = _finish(residual, cond, n_sources, n_collocation, n_check, 0.0, seed,
                     residual_cap, condition_cap, {"inflation": inflation})
    return ensemble, report
