"""Second-order forward-mode differentiation in three variables.

A :class:`Jet` carries a batch of values together with their gradients and
Hessians with respect to the Cartesian coordinates ``(x, y, z)``.  Arithmetic
propagates all three orders exactly (up to rounding), so any expression built
from ``+ - * /``, integer powers and ``sqrt`` yields its exact second-order
Taylor data.
"""

from __future__ import annotations

import numpy as np


class Jet:
    """Truncated second-order Taylor data ``(f, grad f, hess f)``.

    Shapes are ``(n,)``, ``(n, 3)`` and ``(n, 3, 3)`` for a batch of ``n``
    points.
    """

    __slots__ = ("val", "grad", "hess")
    __array_priority__ = 1000

    def __init__(self, val, grad, hess):
        self.val = val
        self.grad = grad
        self.hess = hess

    @classmethod
    def variables(cls, points: np.ndarray) -> tuple["Jet", "Jet", "Jet"]:
        """Seed jets for the three coordinates of ``points`` (shape ``(n, 3)``)."""
        points = np.asarray(points, dtype=float)
        n = points.shape[0]
        out = []
        for k in range(3):
            g = np.zeros((n, 3))
            g[:, k] = 1.0
            out.append(cls(points[:, k].copy(), g, np.zeros((n, 3, 3))))
        return tuple(out)

    @classmethod
    def constant(cls, value, n: int) -> "Jet":
        return cls(np.full(n, float(value)), np.zeros((n, 3)), np.zeros((n, 3, 3)))

    # -- unary helpers -------------------------------------------------------
    def _chain(self, f0, f1, f2) -> "Jet":
        g = self.grad
        hess = f1[:, None, None] * self.hess + f2[:, None, None] * (g[:, :, None] * g[:, None, :])
        return Jet(f0, f1[:, None] * g, hess)

    def sqrt(self) -> "Jet":
        s = np.sqrt(self.val)
        return self._chain(s, 0.5 / s, -0.25 / (s * self.val))

    def reciprocal(self) -> "Jet":
        inv = 1.0 / self.val
        return self._chain(inv, -inv * inv, 2.0 * inv * inv * inv)

    # -- arithmetic ----------------------------------------------------------
    def __neg__(self) -> "Jet":
        return Jet(-self.val, -self.grad, -self.hess)

    def __add__(self, other) -> "Jet":
        if isinstance(other, Jet):
            return Jet(self.val + other.val, self.grad + other.grad, self.hess + other.hess)
        return Jet(self.val + other, self.grad, self.hess)

    __radd__ = __add__

    def __sub__(self, other) -> "Jet":
        return self + (-other)

    def __rsub__(self, other) -> "Jet":
        return (-self) + other

    def __mul__(self, other) -> "Jet":
        if isinstance(other, Jet):
            a, b = self, other
            cross = a.grad[:, :, None] * b.grad[:, None, :]
            hess = (
                a.val[:, None, None] * b.hess
                + b.val[:, None, None] * a.hess
                + cross
                + np.swapaxes(cross, 1, 2)
            )
            return Jet(a.val * b.val, a.val[:, None] * b.grad + b.val[:, None] * a.grad, hess)
        other = np.asarray(other, dtype=float)
        if other.ndim == 0:
            return Jet(self.val * other, self.grad * other, self.hess * other)
        return Jet(self.val * other, self.grad * other[:, None], self.hess * other[:, None, None])

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Jet":
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return self * (1.0 / np.asarray(other, dtype=float))

    def __rtruediv__(self, other) -> "Jet":
        return self.reciprocal() * other

    def __pow__(self, k: int) -> "Jet":
        if not isinstance(k, (int, np.integer)) or k < 0:
            raise ValueError("Jet supports non-negative integer powers only")
        result = Jet.constant(1.0, self.val.shape[0])
        base = self
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result
