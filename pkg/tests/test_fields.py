import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import lpmv

from eqlab.errors import ConfigError, GeometryError, SingularPoint
from eqlab.fields import (
    AxialDipoleField,
    ChargeEnsemble,
    MultipoleField,
    eval_jet,
    eval_value,
    field_from_dict,
    field_to_dict,
    load_field,
    make_cavity_green,
    total_flux,
)
from conftest import fd_jet, random_shell


def _multipole_oracle(coeffs, pts):
    """Direct sum with scipy associated Legendre functions (phase removed)."""
    x, y, z = pts.T
    r = np.linalg.norm(pts, axis=1)
    ct, ph = z / r, np.arctan2(y, x)
    out = np.zeros_like(r)
    for (l, m), c in coeffs.items():
        am = abs(m)
        p = lpmv(am, l, ct) * (-1) ** am  # undo the Condon-Shortley phase
        if m == 0:
            ang = p
        else:
            norm = math.sqrt(2 * math.factorial(l - am) / math.factorial(l + am))
            ang = norm * p * (np.cos(am * ph) if m > 0 else np.sin(am * ph))
        out += c * ang / r ** (l + 1)
    return out


def test_single_charge_value_gradient_hessian():
    f = ChargeEnsemble([[0, 0, 0]], [4 * math.pi])
    jet = eval_jet(f, [2.0, 0.0, 0.0])
    assert jet.value == pytest.approx(0.5)
    np.testing.assert_allclose(jet.gradient, [-0.25, 0, 0], atol=1e-16)
    np.testing.assert_allclose(jet.hessian, np.diag([0.25, -0.125, -0.125]), atol=1e-16)


def test_ensemble_is_harmonic_and_matches_fd(rng):
    f = ChargeEnsemble(rng.uniform(-0.3, 0.3, (5, 3)), rng.uniform(0.1, 1.0, 5))
    pts = random_shell(rng, 30, 1.0, 3.0)
    jet = f.jet(pts)
    g, h = fd_jet(f.value, pts, 1e-4)
    np.testing.assert_allclose(jet.gradient, g, rtol=1e-7, atol=1e-10)
    np.testing.assert_allclose(jet.hessian, h, rtol=1e-4, atol=1e-7)
    assert np.abs(np.trace(jet.hessian, axis1=1, axis2=2)).max() < 1e-14


def test_dipole_equals_multipole_with_same_coefficients(rng):
    pts = random_shell(rng, 50, 0.5, 4.0)
    d = AxialDipoleField(1.3, 0.4)
    m = MultipoleField.from_dict_coefficients({(0, 0): 1.3, (1, 0): 0.4})
    a, b = d.jet(pts), m.jet(pts)
    np.testing.assert_allclose(a.value, b.value, rtol=1e-14)
    np.testing.assert_allclose(a.gradient, b.gradient, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(a.hessian, b.hessian, rtol=1e-11, atol=1e-14)


def test_multipole_matches_scipy_legendre(rng):
    coeffs = {(l, m): rng.normal() for l in range(5) for m in range(-l, l + 1)}
    coeffs[(0, 0)] = 2.0
    f = MultipoleField.from_dict_coefficients(coeffs)
    pts = random_shell(rng, 200, 0.7, 3.0)
    np.testing.assert_allclose(f.value(pts), _multipole_oracle(coeffs, pts), rtol=1e-11, atol=1e-13)


def test_multipole_derivatives_and_harmonicity(rng):
    coeffs = {(l, m): 0.2 * rng.normal() for l in range(4) for m in range(-l, l + 1)}
    f = MultipoleField.from_dict_coefficients(coeffs)
    pts = random_shell(rng, 30, 1.0, 2.0)
    jet = f.jet(pts)
    g, h = fd_jet(f.value, pts, 1e-4)
    np.testing.assert_allclose(jet.gradient, g, rtol=1e-6, atol=1e-8)
    np.testing.assert_allclose(jet.hessian, h, rtol=1e-4, atol=1e-6)
    lap = np.trace(jet.hessian, axis1=1, axis2=2)
    assert np.abs(lap).max() < 1e-12 * np.abs(jet.hessian).max()


def test_multipole_degree_cap():
    with pytest.raises(NotImplementedError):
        MultipoleField.from_dict_coefficients({(9, 0): 1.0})


@pytest.mark.parametrize(
    "field",
    [ChargeEnsemble([[0, 0, 0]], [1.0]), AxialDipoleField(1.0, 0.1),
     MultipoleField.from_dict_coefficients({(0, 0): 1.0, (2, 1): 0.1})],
)
def test_evaluation_at_singularity_raises(field):
    with pytest.raises(SingularPoint):
        eval_jet(field, [0.0, 0.0, 0.0])


def test_cavity_green_image_charge():
    g = make_cavity_green([0, 0, 0.3], 1.0)
    # image at c (1 - a^2 / |c|^2), strength -a / |c|
    np.testing.assert_allclose(g.positions[1], [0, 0, -3.0333333333333332], rtol=1e-15)
    assert g.strengths[1] == pytest.approx(-3.3333333333333335, rel=1e-15)
    sphere = random_shell(np.random.default_rng(0), 100, 1.0, 1.0, center=(0, 0, 0.3))
    assert np.abs(g.value(sphere)).max() < 1e-14


def test_centered_cavity_uses_offset():
    g = make_cavity_green([0, 0, 0], 2.0)
    assert len(g.strengths) == 1
    assert g.offset == pytest.approx(-1 / (8 * math.pi))
    assert eval_value(g, [0, 2.0, 0]) == pytest.approx(0.0, abs=1e-16)


@pytest.mark.parametrize("center", [[0, 0, 1.0], [0, 0, 1.5]])
def test_cavity_origin_outside(center):
    with pytest.raises(GeometryError):
        make_cavity_green(center, 1.0)


@pytest.mark.parametrize(
    "field,flux",
    [(ChargeEnsemble([[0, 0, 0], [0.1, 0, 0]], [0.25, 0.5]), 0.75),
     (AxialDipoleField(1.0, 0.3), 4 * math.pi),
     # the image charge counts too: 1 - a / |c|
     (make_cavity_green([0.1, 0, 0], 1.0), -9.0)],
)
def test_total_flux(field, flux):
    assert total_flux(field) == pytest.approx(flux)


def test_dipole_flux_by_quadrature():
    f = AxialDipoleField(1.0, 0.3)
    x, w = np.polynomial.legendre.leggauss(40)
    phi = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    R = 50.0
    ct, p = np.meshgrid(x, phi, indexing="ij")
    st = np.sqrt(1 - ct**2)
    n = np.stack([st * np.cos(p), st * np.sin(p), ct], -1).reshape(-1, 3)
    g = f.jet(R * n).gradient
    flux = -np.sum(np.sum(g * n, 1) * np.repeat(w, 64)) * R**2 * 2 * np.pi / 64
    assert flux == pytest.approx(total_flux(f), rel=1e-12)


def test_off_center_cavity_positive_inside(rng):
    g = make_cavity_green([0.2, 0, 0], 0.5)
    pts = random_shell(rng, 100, 0.0, 0.49, center=(0.2, 0, 0))
    pts = pts[np.linalg.norm(pts, axis=1) > 1e-3]
    assert np.all(g.value(pts) > 0)


@pytest.mark.parametrize(
    "field",
    [ChargeEnsemble([[0, 0, 0], [0.1, 0.2, 0]], [1.0, -0.2], offset=0.3),
     AxialDipoleField(1.0, 0.1),
     MultipoleField.from_dict_coefficients({(0, 0): 1.0, (2, -1): 0.05, (3, 2): 0.01})],
)
def test_json_round_trip(field, tmp_path):
    path = tmp_path / "f.json"
    path.write_text(json.dumps(field_to_dict(field)))
    again = load_field(path)
    pts = np.array([[1.0, 0.5, -0.3], [0.2, -2.0, 1.0]])
    np.testing.assert_array_equal(field.value(pts), again.value(pts))


@pytest.mark.parametrize("spec", [{}, {"type": "quadrupole"}, {"type": "dipole", "c00": 1.0}])
def test_bad_field_specs(spec):
    with pytest.raises(ConfigError):
        field_from_dict(spec)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5),
                          st.floats(0.01, 2.0)), min_size=1, max_size=6))
def test_ensemble_flux_is_sum_of_strengths(charges):
    arr = np.array(charges)
    f = ChargeEnsemble(arr[:, :3], arr[:, 3])
    assert f.flux == pytest.approx(math.fsum(arr[:, 3]))
    # far away the potential approaches the monopole term
    far = np.array([[0.0, 0.0, 1e6]])
    assert f.value(far)[0] == pytest.approx(f.flux / (4 * math.pi * 1e6), rel=1e-5)
