import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eqlab.errors import ConfigError, GeometryError, IllConditioned, OriginOutside, ResidualTooLarge
from eqlab.fields import make_cavity_green
from eqlab.functionals import level_report, sweep
from eqlab.levelset import GridSpec, sample_surface
from eqlab.mfs import ConvexShape, fibonacci_sphere, solve_cavity, solve_exterior
from conftest import random_shell

ELLIPSOID = ConvexShape.ellipsoid(1.0, 0.8, 0.7)


def test_fibonacci_points_are_unit_and_balanced():
    u = fibonacci_sphere(500)
    np.testing.assert_allclose(np.linalg.norm(u, axis=1), 1.0, rtol=1e-15)
    assert np.abs(u.mean(axis=0)).max() < 2e-3


@settings(max_examples=30, deadline=None)
@given(st.floats(0.3, 2.0), st.floats(0.3, 2.0), st.floats(0.3, 2.0), st.sampled_from([2.0, 3.0, 4.0, 6.0]))
def test_boundary_points_lie_on_shape(a, b, c, p):
    shape = ConvexShape((a, b, c), p, (0.1, -0.2, 0.3))
    pts, normals = shape.sample(200)
    np.testing.assert_allclose(shape.level_function(pts), 1.0, rtol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(normals, axis=1), 1.0, rtol=1e-14)
    # normals point outward
    assert np.all(shape.level_function(pts + 1e-6 * normals) > 1.0)
    assert shape.contains(shape.center) and not shape.contains(pts[0] + normals[0])


@pytest.mark.parametrize("kw", [{"axes": (1, 0, 1)}, {"axes": (1, 1, 1), "p": 1.5}, {"axes": (1, 1)}])
def test_shape_validation(kw):
    with pytest.raises(GeometryError):
        ConvexShape(**kw)


def test_shape_dict_round_trip():
    s = ConvexShape((1, 2, 3), 4.0, (0, 0, 1))
    assert ConvexShape.from_dict(s.to_dict()) == s
    with pytest.raises(ConfigError):
        ConvexShape.from_dict({"kind": "torus", "axes": [1, 1, 1]})


def test_sphere_fit_is_a_single_charge():
    field, fit = solve_exterior(ConvexShape.sphere(), 1.0, n_sources=64)
    assert fit.boundary_residual_max <= 1e-12
    assert field.flux == pytest.approx(1.0, rel=1e-15)
    assert np.abs(field.strengths[1:]).max() < 1e-12
    rep = level_report(sample_surface(field, 0.05, GridSpec(16, 32)))
    assert abs(rep.W_value) <= 1e-10


def test_ellipsoid_fit_256_sources_at_depth_0_6():
    _, fit = solve_exterior(ELLIPSOID, 1.0, n_sources=256, inflation=0.6, residual_cap=None)
    assert fit.n_check == 10_000
    assert fit.boundary_residual_max <= 1e-6


def test_ellipsoid_refinement_gains_tenfold():
    r = [solve_exterior(ELLIPSOID, 1.0, n, residual_cap=None)[1].boundary_residual_max for n in (128, 256, 512)]
    assert r[1] <= r[0] / 5 and r[2] <= r[1] / 10


def test_exterior_flux_and_report():
    field, fit = solve_exterior(ELLIPSOID, 2.5, n_sources=128, residual_cap=None)
    assert math.fsum(field.strengths) == pytest.approx(2.5, rel=1e-14)
    assert fit.boundary_residual_max >= fit.boundary_residual_rms >= 0
    assert fit.n_collocation == 4 * 128
    pts = ELLIPSOID.random_boundary(200, np.random.default_rng(5))
    np.testing.assert_allclose(field.value(pts), fit.boundary_level, rtol=2 * fit.boundary_residual_max)


def test_exterior_fit_is_deterministic():
    a = solve_exterior(ELLIPSOID, 1.0, 64, residual_cap=None, seed=3)
    b = solve_exterior(ELLIPSOID, 1.0, 64, residual_cap=None, seed=3)
    np.testing.assert_array_equal(a[0].strengths, b[0].strengths)
    assert a[1] == b[1]


def test_residual_cap_and_conditioning():
    with pytest.raises(ResidualTooLarge):
        solve_exterior(ELLIPSOID, 1.0, 32, residual_cap=1e-8)
    with pytest.raises(IllConditioned):
        solve_exterior(ELLIPSOID, 1.0, 256, inflation=0.2, residual_cap=None, condition_cap=1e6)


@pytest.mark.parametrize("kw", [{"n_collocation": 10}, {"inflation": 1.2}, {"flux": -1.0}])
def test_exterior_parameter_validation(kw):
    args = {"n_sources": 16, **kw}
    with pytest.raises(ConfigError):
        solve_exterior(ELLIPSOID, **args)


def test_centered_cavity_matches_closed_form(rng):
    field, fit = solve_cavity(ConvexShape.sphere(), n_sources=64)
    pts = random_shell(rng, 200, 0.05, 0.95)
    exact = make_cavity_green([0, 0, 0], 1.0)
    np.testing.assert_allclose(field.value(pts), exact.value(pts), rtol=0, atol=1e-10)
    assert field.strengths[0] == 1.0


def test_offset_cavity_matches_image_charge(rng):
    field, _ = solve_cavity(ConvexShape.sphere(1.0, (0, 0, 0.3)), n_sources=512)
    exact = make_cavity_green([0, 0, 0.3], 1.0)
    pts = random_shell(rng, 200, 0.0, 0.999, center=(0, 0, 0.3))
    pts = pts[np.linalg.norm(pts, axis=1) > 0.05]
    np.testing.assert_allclose(field.value(pts), exact.value(pts), rtol=0, atol=1e-8)


def test_cavity_origin_outside():
    with pytest.raises(OriginOutside):
        solve_cavity(ConvexShape.sphere(1.0, (0, 0, 1.5)), n_sources=32)


def test_ellipsoid_cavity_W_nonpositive():
    field, fit = solve_cavity(ConvexShape.ellipsoid(1.0, 0.9, 0.8), n_sources=256)
    res = sweep(field, [0.3, 0.6, 1.2, 2.4], GridSpec(16, 32, bracket=(1e-4, 0.79)), problem="interior")
    assert res.convex
    assert all(r.W_value <= 0 for r in res.reports)
    assert res.monotone
