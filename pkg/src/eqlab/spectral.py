"""Spectral differentiation on a Gauss-Legendre x uniform tensor grid.

A smooth function on a star-shaped surface, written in polar coordinates
``(theta, phi)``, extends to a smooth function on the torus with
``f(-theta, phi + pi) = s f(theta, phi)``; ``s = +1`` for scalars and position
components, and each theta-derivative flips ``s``.  Its ``m``-th azimuthal
Fourier coefficient is then even (cosine series) or odd (sine series) in
theta with parity ``s (-1)^m``.  Collocating the matching trigonometric
series on the Gauss-Legendre angles gives spectrally accurate theta
derivatives even for odd ``m``, where plain polynomial interpolation in
``cos(theta)`` converges only algebraically.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=32)
def gauss_legendre_theta(n_theta: int) -> tuple[np.ndarray, np.ndarray]:
    """Polar angles (ascending) and weights for integrating ``g(theta) sin(theta) dtheta``."""
    x, w = np.polynomial.legendre.leggauss(n_theta)
    x, w = x[::-1], w[::-1]
    theta = np.arccos(x)
    theta.setflags(write=False)
    w.setflags(write=False)
    return theta, w


@lru_cache(maxsize=32)
def _theta_diff_matrices(n_theta: int) -> tuple[np.ndarray, np.ndarray]:
    theta, _ = gauss_legendre_theta(n_theta)
    k_even = np.arange(n_theta)
    k_odd = np.arange(1, n_theta + 1)
    C = np.cos(np.outer(theta, k_even))
    dC = -np.sin(np.outer(theta, k_even)) * k_even
    S = np.sin(np.outer(theta, k_odd))
    dS = np.cos(np.outer(theta, k_odd)) * k_odd
    d_even = np.linalg.solve(C.T, dC.T).T
    d_odd = np.linalg.solve(S.T, dS.T).T
    d_even.setflags(write=False)
    d_odd.setflags(write=False)
    return d_even, d_odd


def d_theta(values: np.ndarray, sign: int = 1) -> np.ndarray:
    """Derivative in theta of data shaped ``(n_theta, n_phi, ...)``.

    ``sign`` is the torus-reflection parity of ``values`` (see module doc);
    the result has parity ``-sign``.
    """
    values = np.asarray(values, dtype=float)
    n_theta, n_phi = values.shape[:2]
    d_even, d_odd = _theta_diff_matrices(n_theta)
    coeffs = np.fft.rfft(values, axis=1)
    m = np.arange(coeffs.shape[1])
    out = np.empty_like(coeffs)
    even = (sign * (-1) ** m) > 0
    out[:, even] = np.tensordot(d_even, coeffs[:, even], axes=(1, 0))
    out[:, ~even] = np.tensordot(d_odd, coeffs[:, ~even], axes=(1, 0))
    return np.fft.irfft(out, n=n_phi, axis=1)


def d_phi(values: np.ndarray) -> np.ndarray:
    """Periodic spectral derivative in phi (axis 1) on a uniform grid."""
    values = np.asarray(values, dtype=float)
    n_phi = values.shape[1]
    coeffs = np.fft.rfft(values, axis=1)
    m = np.arange(coeffs.shape[1]).astype(float)
    if n_phi % 2 == 0:
        m[-1] = 0.0  # Nyquist mode has no well-defined derivative
    shape = [1] * coeffs.ndim
    shape[1] = -1
    return np.fft.irfft(coeffs * (1j * m).reshape(shape), n=n_phi, axis=1)


def d_periodic(values: np.ndarray, axis: int = 0) -> np.ndarray:
    """Spectral derivative of periodic samples on ``[0, 2 pi)`` along ``axis``."""
    values = np.moveaxis(np.asarray(values, dtype=float), axis, 1 if values.ndim > 1 else 0)
    if values.ndim == 1:
        return d_phi(values[None, :])[0]
    return np.moveaxis(d_phi(values), 1, axis)
