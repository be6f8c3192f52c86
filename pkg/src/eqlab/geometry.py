"""Pointwise geometry of the level set through a point, read off a FieldJet.

Sign conventions: the unit normal is ``n = -grad(phi) / E``, which points away
from the body in exterior problems and away from the charge for a cavity
Green's function.  The Weingarten map satisfies ``dn = -W dr`` for tangent
``dr``, so a sphere of radius ``R`` around a point charge has ``H = -1/R`` and
``K = 1/R^2``.  ``W`` is stored as the projected 3x3 operator ``P Hess P / E``
with ``P = I - n n^T``; it has ``n`` in its kernel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CriticalPoint
from .fields import FieldJet

EPS_E = 1e-10


@dataclass(frozen=True)
class SurfaceFrame:
    """Geometric data of the level surface through ``position``.

    Array attributes carry the batch shape of the input jet as leading
    dimensions (scalar fields have that shape, vectors add a trailing 3).
    """

    position: np.ndarray
    normal: np.ndarray
    intensity: np.ndarray
    weingarten: np.ndarray
    mean_curvature: np.ndarray
    gauss_curvature: np.ndarray
    dlogE: np.ndarray
    fieldline_curvature: np.ndarray
    # (H^2 - K) from the traceless part of W; avoids cancellation when the
    # two principal curvatures nearly agree.
    umbilic_defect: np.ndarray
    # full gradient of log E (normal + tangential parts)
    grad_logE: np.ndarray

    @property
    def E(self) -> np.ndarray:
        return self.intensity

    @property
    def H(self) -> np.ndarray:
        return self.mean_curvature

    @property
    def K(self) -> np.ndarray:
        return self.gauss_curvature

    @property
    def projector(self) -> np.ndarray:
        n = self.normal
        return np.eye(3) - n[..., :, None] * n[..., None, :]

    def principal_curvatures(self) -> np.ndarray:
        """The two tangential eigenvalues of W, ascending; shape ``(..., 2)``."""
        H = self.mean_curvature
        disc = np.sqrt(np.maximum(self.umbilic_defect, 0.0))
        return np.stack([H - disc, H + disc], axis=-1)

    def is_convex(self) -> np.ndarray:
        """Strict convexity in the outward-normal convention: both curvatures < 0."""
        return (self.gauss_curvature > 0) & (self.mean_curvature < 0)


def frame(jet: FieldJet, position=None, eps_E: float = EPS_E) -> SurfaceFrame:
    """Build the :class:`SurfaceFrame` of the level set through each jet point."""
    g = np.asarray(jet.gradient, dtype=float)
    hess = np.asarray(jet.hessian, dtype=float)
    E = np.linalg.norm(g, axis=-1)
    if np.any(~(E > eps_E)):
        raise CriticalPoint(f"field intensity {np.min(E):.3e} below threshold {eps_E:.1e}")
    n = -g / E[..., None]
    P = np.eye(3) - n[..., :, None] * n[..., None, :]
    W = P @ hess @ P / E[..., None, None]
    W = 0.5 * (W + np.swapaxes(W, -1, -2))
    trW = np.trace(W, axis1=-2, axis2=-1)
    H = 0.5 * trW
    traceless = W - H[..., None, None] * P
    defect = 0.5 * np.sum(traceless * traceless, axis=(-2, -1))
    K = H * H - defect
    hg = (hess @ g[..., None])[..., 0]
    grad_logE = hg / (E * E)[..., None]
    dlogE = (P @ grad_logE[..., None])[..., 0]
    k = np.linalg.norm(dlogE, axis=-1)
    if position is None:
        position = np.full(g.shape, np.nan)
    return SurfaceFrame(
        position=np.asarray(position, dtype=float),
        normal=n,
        intensity=E,
        weingarten=W,
        mean_curvature=H,
        gauss_curvature=K,
        dlogE=dlogE,
        fieldline_curvature=k,
        umbilic_defect=defect,
        grad_logE=grad_logE,
    )


def laplacian_logE(jet: FieldJet, eps_E: float = EPS_E) -> np.ndarray:
    """Spatial Laplacian of ``log|grad phi|`` for a harmonic ``phi``.

    Uses ``(||Hess||_F^2 - 2 |Hess grad|^2 / E^2) / E^2``, which needs no third
    derivatives because ``grad(Laplacian phi) = 0``.
    """
    g = np.asarray(jet.gradient, dtype=float)
    hess = np.asarray(jet.hessian, dtype=float)
    E2 = np.sum(g * g, axis=-1)
    if np.any(~(np.sqrt(E2) > eps_E)):
        raise CriticalPoint("field intensity below threshold")
    hg = (hess @ g[..., None])[..., 0]
    fro2 = np.sum(hess * hess, axis=(-2, -1))
    return (fro2 - 2.0 * np.sum(hg * hg, axis=-1) / E2) / E2


def normal_logE_identity(fr: SurfaceFrame, jet: FieldJet) -> np.ndarray:
    """Residual ``|n . grad log E - 2H|`` at each point."""
    g = np.asarray(jet.gradient, dtype=float)
    E2 = np.sum(g * g, axis=-1)
    hg = (np.asarray(jet.hessian) @ g[..., None])[..., 0]
    normal_derivative = np.sum(fr.normal * hg, axis=-1) / E2
    return np.abs(normal_derivative - 2.0 * fr.mean_curvature)


def at(field, points, eps_E: float = EPS_E) -> SurfaceFrame:
    """Convenience: evaluate the field and build frames at ``points``."""
    from .fields import eval_jet

    points = np.asarray(points, dtype=float)
    return frame(eval_jet(field, points), position=points, eps_E=eps_E)
