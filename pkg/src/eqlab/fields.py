"""Closed-form harmonic potentials with exact derivatives to second order.

Unit conventions
----------------
Point charges use the free-space kernel ``q / (4 pi |r - p|)``, so a charge of
strength ``q`` carries flux ``q`` (flux = ``-oint n . grad U dS``).  The axial
dipole and multipole models use the bare expansion
``U = sum_lm sqrt(4 pi / (2l + 1)) c_lm Y_lm / |r|^(l + 1)``, so ``c00 / |r|``
carries flux ``4 pi c00``.

Real spherical harmonics are used without the Condon-Shortley phase::

    sqrt(4 pi / (2l + 1)) Y_lm = N_lm P_l^|m|(cos t) * {cos(m p), 1, sin(|m| p)}

for ``m > 0``, ``m = 0`` and ``m < 0`` respectively, with
``N_lm = sqrt(2 (l - |m|)! / (l + |m|)!)`` for ``m != 0`` and ``N_l0 = 1``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Union

import numpy as np

from .autodiff import Jet
from .errors import ConfigError, GeometryError, SingularPoint

FOUR_PI = 4.0 * math.pi
SINGULAR_TOL = 1e-12
MAX_DEGREE = 8
_CHUNK = 512


@dataclass(frozen=True)
class FieldJet:
    """Value, gradient and Hessian of a potential at one or many points."""

    value: np.ndarray
    gradient: np.ndarray
    hessian: np.ndarray

    def __len__(self) -> int:
        return int(np.shape(self.value)[0]) if np.ndim(self.value) else 1

    def take(self, index) -> "FieldJet":
        return FieldJet(self.value[index], self.gradient[index], self.hessian[index])


def _check_points(points: np.ndarray, singular: np.ndarray) -> None:
    if singular.size == 0:
        return
    for start in range(0, points.shape[0], _CHUNK):
        block = points[start:start + _CHUNK]
        d = np.linalg.norm(block[:, None, :] - singular[None, :, :], axis=-1)
        if np.any(d <= SINGULAR_TOL):
            raise SingularPoint("evaluation point coincides with a source singularity")


@dataclass(frozen=True)
class ChargeEnsemble:
    """Point sources ``U(r) = offset + sum_i q_i / (4 pi |r - p_i|)``.

    ``offset`` is a harmonic constant; it lets the centred cavity Green's
    function vanish on its sphere without an image charge at infinity.
    """

    positions: np.ndarray
    strengths: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float)).reshape(-1, 3)
        q = np.atleast_1d(np.asarray(self.strengths, dtype=float))
        if pos.shape[0] != q.shape[0]:
            raise ValueError("positions and strengths must have the same length")
        pos.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "strengths", q)
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def singular_points(self) -> np.ndarray:
        return self.positions

    @property
    def flux(self) -> float:
        return float(math.fsum(self.strengths))

    def value(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        out = np.empty(points.shape[0])
        for start in range(0, points.shape[0], _CHUNK):
            block = points[start:start + _CHUNK]
            d = np.linalg.norm(block[:, None, :] - self.positions[None], axis=-1)
            out[start:start + _CHUNK] = (self.strengths / d).sum(axis=1) / FOUR_PI
        return out + self.offset

    def jet(self, points: np.ndarray) -> FieldJet:
        points = np.atleast_2d(points)
        n = points.shape[0]
        val = np.empty(n)
        grad = np.empty((n, 3))
        hess = np.empty((n, 3, 3))
        q = self.strengths / FOUR_PI
        eye = np.eye(3)
        for start in range(0, n, _CHUNK):
            sl = slice(start, start + _CHUNK)
            d = points[sl, None, :] - self.positions[None]
            r2 = np.einsum("nmi,nmi->nm", d, d)
            inv_r = 1.0 / np.sqrt(r2)
            inv_r3 = inv_r / r2
            w3 = q * inv_r3
            val[sl] = (q * inv_r).sum(axis=1)
            grad[sl] = -np.einsum("nm,nmi->ni", w3, d)
            w5 = 3.0 * w3 / r2
            hess[sl] = np.einsum("nm,nmi,nmj->nij", w5, d, d) - w3.sum(axis=1)[:, None, None] * eye
        return FieldJet(val + self.offset, grad, hess)

    def to_dict(self) -> dict[str, Any]:
        return {
            "type": "ensemble",
            "charges": [[*map(float, p), float(s)] for p, s in zip(self.positions, self.strengths)],
            "offset": self.offset,
        }


@dataclass(frozen=True)
class AxialDipoleField:
    """``U = c00 / |r| + c10 cos(theta) / |r|^2`` about the z axis."""

    c00: float
    c10: float

    def __post_init__(self):
        if not self.c00 > 0:
            raise ValueError("c00 must be positive")
        if self.c10 == 0:
            raise ValueError("c10 must be non-zero")

    @property
    def singular_points(self) -> np.ndarray:
        return np.zeros((1, 3))

    @property
    def flux(self) -> float:
        return FOUR_PI * self.c00

    def radius(self, level: float, theta) -> np.ndarray:
        """Closed-form radius of the level surface along polar angle ``theta``."""
        disc = self.c00 ** 2 + 4.0 * self.c10 * level * np.cos(theta)
        return (self.c00 + np.sqrt(disc)) / (2.0 * level)

    def value(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        r = np.linalg.norm(points, axis=1)
        return self.c00 / r + self.c10 * points[:, 2] / r ** 3

    def jet(self, points: np.ndarray) -> FieldJet:
        x = np.atleast_2d(points)
        r2 = np.einsum("ni,ni->n", x, x)
        r = np.sqrt(r2)
        z = x[:, 2]
        inv3 = 1.0 / (r * r2)
        inv5 = inv3 / r2
        inv7 = inv5 / r2
        eye = np.eye(3)
        ez = np.array([0.0, 0.0, 1.0])
        xx = x[:, :, None] * x[:, None, :]
        val = self.c00 / r + self.c10 * z * inv3
        grad = -self.c00 * inv3[:, None] * x + self.c10 * (
            inv3[:, None] * ez - 3.0 * (z * inv5)[:, None] * x
        )
        ezx = ez[None, :, None] * x[:, None, :]
        hess_mono = 3.0 * inv5[:, None, None] * xx - inv3[:, None, None] * eye
        hess_dip = (
            -3.0 * inv5[:, None, None] * (ezx + np.swapaxes(ezx, 1, 2) + z[:, None, None] * eye)
            + 15.0 * (z * inv7)[:, None, None] * xx
        )
        return FieldJet(val, grad, self.c00 * hess_mono + self.c10 * hess_dip)

    def to_dict(self) -> dict[str, Any]:
        return {"type": "dipole", "c00": float(self.c00), "c10": float(self.c10)}


def _sqrt(a):
    return a.sqrt() if isinstance(a, Jet) else np.sqrt(a)


def _norm_factor(l: int, m: int) -> float:
    if m == 0:
        return 1.0
    am = abs(m)
    return math.sqrt(2.0 * math.factorial(l - am) / math.factorial(l + am))


@dataclass(frozen=True)
class MultipoleField:
    """Exterior multipole expansion about the origin.

    ``coefficients[l, m + L]`` holds ``c_lm`` for ``0 <= l <= L``,
    ``-l <= m <= l``; entries with ``|m| > l`` are ignored.
    """

    coefficients: np.ndarray
    max_degree: int = MAX_DEGREE

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float)
        if c.ndim != 2 or c.shape[1] != 2 * c.shape[0] - 1:
            raise ValueError("coefficients must have shape (L + 1, 2L + 1)")
        if c.shape[0] - 1 > self.max_degree:
            raise NotImplementedError(
                f"degree {c.shape[0] - 1} exceeds the multipole cap L={self.max_degree}"
            )
        c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    @classmethod
    def from_dict_coefficients(cls, coeffs: dict[tuple[int, int], float], max_degree: int = MAX_DEGREE):
        L = max(l for l, _ in coeffs) if coeffs else 0
        arr = np.zeros((L + 1, 2 * L + 1))
        for (l, m), v in coeffs.items():
            if abs(m) > l:
                raise ValueError(f"invalid multipole index ({l}, {m})")
            arr[l, m + L] = v
        return cls(arr, max_degree=max_degree)

    @property
    def degree(self) -> int:
        return self.coefficients.shape[0] - 1

    def coefficient(self, l: int, m: int) -> float:
        if l > self.degree or abs(m) > l:
            return 0.0
        return float(self.coefficients[l, m + self.degree])

    @property
    def singular_points(self) -> np.ndarray:
        return np.zeros((1, 3))

    @property
    def flux(self) -> float:
        return FOUR_PI * self.coefficient(0, 0)

    def _evaluate(self, x, y, z):
        L = self.degree
        r2 = x * x + y * y + z * z
        inv_r = 1.0 / _sqrt(r2)
        inv_r2 = inv_r * inv_r
        total = None
        # sectoral seeds R_m^m and the column recursion in l for each m
        sect_c, sect_s = 1.0 + 0.0 * x, 0.0 * x
        radial_pows = [inv_r]
        for _ in range(L):
            radial_pows.append(radial_pows[-1] * inv_r2)
        for m in range(L + 1):
            if m > 0:
                c_new = (2 * m - 1) * (x * sect_c - y * sect_s)
                s_new = (2 * m - 1) * (x * sect_s + y * sect_c)
                sect_c, sect_s = c_new, s_new
            prev_c, prev_s = None, None
            cur_c, cur_s = sect_c, sect_s
            for l in range(m, L + 1):
                if l == m + 1:
                    prev_c, prev_s = cur_c, cur_s
                    cur_c, cur_s = (2 * m + 1) * z * cur_c, (2 * m + 1) * z * cur_s
                elif l > m + 1:
                    nc = ((2 * l - 1) * z * cur_c - (l + m - 1) * r2 * prev_c) / (l - m)
                    ns = ((2 * l - 1) * z * cur_s - (l + m - 1) * r2 * prev_s) / (l - m)
                    prev_c, prev_s = cur_c, cur_s
                    cur_c, cur_s = nc, ns
                cp = self.coefficient(l, m)
                cm = self.coefficient(l, -m) if m > 0 else 0.0
                if cp == 0.0 and cm == 0.0:
                    continue
                nf = _norm_factor(l, m)
                term = (nf * cp) * cur_c
                if m > 0 and cm != 0.0:
                    term = term + (nf * cm) * cur_s
                term = term * radial_pows[l]
                total = term if total is None else total + term
        if total is None:
            total = 0.0 * x
        return total

    def value(self, points: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(points)
        return np.asarray(self._evaluate(p[:, 0], p[:, 1], p[:, 2]), dtype=float)

    def jet(self, points: np.ndarray) -> FieldJet:
        p = np.atleast_2d(points)
        x, y, z = Jet.variables(p)
        out = self._evaluate(x, y, z)
        return FieldJet(out.val, out.grad, 0.5 * (out.hess + np.swapaxes(out.hess, 1, 2)))

    def to_dict(self) -> dict[str, Any]:
        L = self.degree
        coeffs = [
            [l, m, float(self.coefficients[l, m + L])]
            for l in range(L + 1)
            for m in range(-l, l + 1)
            if self.coefficients[l, m + L] != 0.0
        ]
        return {"type": "multipole", "L": L, "coefficients": coeffs}


Field = Union[ChargeEnsemble, AxialDipoleField, MultipoleField]


def eval_jet(field: Field, r) -> FieldJet:
    """Value, gradient and Hessian of ``field`` at ``r`` (shape ``(3,)`` or ``(n, 3)``).

    Raises :class:`SingularPoint` if any point lies within 1e-12 of a source.
    """
    r = np.asarray(r, dtype=float)
    single = r.ndim == 1
    pts = r.reshape(-1, 3)
    _check_points(pts, field.singular_points)
    jet = field.jet(pts)
    if single:
        return jet.take(0)
    return jet


def eval_value(field: Field, r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    single = r.ndim == 1
    out = field.value(r.reshape(-1, 3))
    return out[0] if single else out


def make_cavity_green(center, radius: float) -> ChargeEnsemble:
    """Green's function of a spherical cavity with the unit charge at the origin.

    The sphere ``|r - center| = radius`` must strictly contain the origin.
    """
    c = np.asarray(center, dtype=float).reshape(3)
    d = float(np.linalg.norm(c))
    a = float(radius)
    if not a > 0 or d >= a:
        raise GeometryError(f"origin must lie strictly inside the sphere (|c|={d}, a={a})")
    if d == 0.0:
        return ChargeEnsemble(np.zeros((1, 3)), np.array([1.0]), offset=-1.0 / (FOUR_PI * a))
    image = c * (1.0 - a * a / (d * d))
    return ChargeEnsemble(np.vstack([np.zeros(3), image]), np.array([1.0, -a / d]))


def total_flux(field: Field) -> float:
    """Exact flux ``-oint n . grad U dS`` carried by the field's monopole moment."""
    return field.flux


# -- JSON schema -------------------------------------------------------------
#
# {"type": "ensemble", "charges": [[x, y, z, q], ...], "offset": 0.0}
# {"type": "dipole", "c00": 1.0, "c10": 0.1}
# {"type": "multipole", "L": 4, "coefficients": [[l, m, c_lm], ...]}
# {"type": "cavity_green", "center": [cx, cy, cz], "radius": a}


def field_from_dict(spec: dict[str, Any]) -> Field:
    try:
        kind = spec["type"]
    except (KeyError, TypeError):
        raise ConfigError("field.type is required") from None
    try:
        if kind == "ensemble":
            charges = np.asarray(spec["charges"], dtype=float).reshape(-1, 4)
            return ChargeEnsemble(charges[:, :3], charges[:, 3], offset=spec.get("offset", 0.0))
        if kind == "dipole":
            return AxialDipoleField(float(spec["c00"]), float(spec["c10"]))
        if kind == "multipole":
            coeffs = {(int(l), int(m)): float(c) for l, m, c in spec["coefficients"]}
            L = int(spec.get("L", max((l for l, _ in coeffs), default=0)))
            coeffs.setdefault((L, 0), 0.0)
            return MultipoleField.from_dict_coefficients(coeffs)
        if kind == "cavity_green":
            return make_cavity_green(spec["center"], float(spec["radius"]))
    except KeyError as exc:
        raise ConfigError(f"field.{exc.args[0]} is required for type {kind!r}") from None
    raise ConfigError(f"unknown field.type {kind!r}")


def field_to_dict(field: Field) -> dict[str, Any]:
    return field.to_dict()


def load_field(path: Union[str, Path]) -> Field:
    return field_from_dict(json.loads(Path(path).read_text()))
