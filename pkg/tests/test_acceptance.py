"""End-to-end acceptance criteria at their stated tolerances.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the measured
values; a PASS/FAIL line per criterion is printed in the terminal summary.
"""
import math

import numpy as np
import pytest

from eqlab.fields import AxialDipoleField, ChargeEnsemble, MultipoleField, make_cavity_green
from eqlab.functionals import (
    area_evolution_residual,
    closed_form_identities,
    identity_suite,
    level_report,
    pointwise_fd_identities,
    refinement_noise,
    sweep,
)
from eqlab.geometry import at
from eqlab.levelset import GridSpec, flow_trace, sample_surface, transport_grid
from eqlab.mfs import ConvexShape, solve_exterior
from eqlab.planar import EllipseExterior, planar_sweep
from conftest import random_shell

FOUR_PI = 4.0 * math.pi
MONOPOLE = ChargeEnsemble([[0, 0, 0]], [1.0])
DIPOLE = AxialDipoleField(1.0, 0.2)
CAVITY = make_cavity_green([0, 0, 0.3], 1.0)
CENTERED_CAVITY = make_cavity_green([0, 0, 0], 1.0)

SPEC = GridSpec(24, 48)
CAVITY_SPEC = GridSpec(24, 48, bracket=(1e-4, 1.29))
DIPOLE_LEVELS = np.geomspace(0.02, 0.2, 8)
CAVITY_LEVELS = np.geomspace(0.2, 2.0, 6)


def show(label, **values):
    print(f"\n[{label}] " + ", ".join(f"{k}={v:.3e}" if isinstance(v, float) else f"{k}={v}"
                                     for k, v in values.items()))


@pytest.fixture(scope="module")
def sweeps():
    return {
        "monopole": sweep(MONOPOLE, [0.02, 0.05, 0.1, 0.2, 0.4], GridSpec(16, 32)),
        "dipole": sweep(DIPOLE, DIPOLE_LEVELS, SPEC),
        "cavity": sweep(CAVITY, CAVITY_LEVELS, CAVITY_SPEC, problem="interior"),
        "centered_cavity": sweep(CENTERED_CAVITY, [0.1, 0.3, 1.0, 3.0], GridSpec(16, 32, bracket=(1e-5, 0.999)),
                                 problem="interior"),
    }


@pytest.mark.criterion(1, "sphere rigidity")
def test_sphere_rigidity(sweeps):
    res = sweeps["monopole"]
    F = max(abs(r.F_value) for r in res.reports)
    W = max(abs(r.W_value) for r in res.reports)
    show("1", max_F=F, max_W=W, flux_spread=res.flux_spread, gauss_bonnet=res.gauss_bonnet_deviation)
    assert F <= 1e-10 and W <= 1e-10
    assert res.flux_spread <= 1e-10
    assert res.gauss_bonnet_deviation <= 1e-10


@pytest.mark.criterion(2, "exterior sign with refinement margin")
def test_exterior_sign(sweeps):
    res = sweeps["dipole"]
    assert res.convex
    margins = []
    for lv, rep in zip(res.levels, res.reports):
        _, noise = refinement_noise(DIPOLE, lv, SPEC)
        margins.append(rep.F_value / max(noise, 1e-300))
        assert rep.F_value > 0
    show("2", min_F=min(r.F_value for r in res.reports), min_margin=min(margins))
    assert min(margins) >= 10


@pytest.mark.criterion(3, "interior sign and centred rigidity")
def test_interior_sign(sweeps):
    res = sweeps["cavity"]
    centred = sweeps["centered_cavity"]
    F_max = max(r.F_value for r in res.reports)
    F_centred = max(abs(r.F_value) for r in centred.reports)
    show("3", max_F=F_max, centred_abs_F=F_centred)
    assert res.convex and len(res.levels) == 6
    assert F_max < 0
    assert F_centred <= 1e-10


@pytest.mark.criterion(4, "monotonicity")
def test_monotonicity(sweeps):
    dip = sweeps["dipole"]
    cav = sweeps["cavity"]
    W = np.array([r.W_value for r in dip.reports])
    beta = max(r.beta_integral for r in cav.reports)
    show("4", min_dipole_step=float(np.diff(W).min()), max_cavity_beta=beta, cavity_monotone=cav.monotone)
    assert np.all(np.diff(W) >= -1e-9) and dip.monotone
    assert beta <= 0
    assert cav.monotone


@pytest.mark.criterion(5, "derivative formula")
def test_derivative_formula(sweeps):
    res = sweeps["dipole"]
    show("5", max_rel_error=max(res.derivative_rel_error))
    assert len(res.derivative_rel_error) == len(res.levels) - 2
    assert max(res.derivative_rel_error) <= 1e-2


@pytest.mark.criterion(6, "asymptotic decay slope")
def test_asymptotic_slope():
    levels = np.geomspace(0.005, 0.2, 8)
    W = [level_report(sample_surface(DIPOLE, lv, SPEC)).W_value for lv in levels]
    slope = float(np.polyfit(np.log(levels), np.log(W), 1)[0])
    show("6", slope=slope)
    assert abs(slope - 2.0) <= 0.1


@pytest.mark.criterion(7, "dipole expansions")
@pytest.mark.parametrize("theta", [math.pi / 4, math.pi / 2, 3 * math.pi / 4])
def test_dipole_expansions(theta):
    U, c = 0.01, 0.1
    f = AxialDipoleField(1.0, c)
    r = f.radius(U, theta)
    fr = at(f, [[r * math.sin(theta), 0.0, r * math.cos(theta)]])
    c2 = math.cos(2 * theta)
    k_theta = U + c**2 * (1 - 9 * c2) * U**3 / 4
    k_phi = U - c**2 * (5 + 3 * c2) * U**3 / 4
    E = U**2 - c**2 * (3 * c2 + 1) * U**4 / 4
    k = np.sort(np.abs(fr.principal_curvatures()[0]))
    k_err = np.abs(k - np.sort([k_theta, k_phi])) / np.sort([k_theta, k_phi])
    E_err = abs(fr.E[0] - E) / E
    show("7", theta=theta, k_err=float(k_err.max()), E_err=E_err)
    assert k_err.max() <= 5 * U**2
    assert E_err <= 5 * U**2
    if theta == math.pi / 4:
        expected = 9 * c**4 * math.sin(theta) ** 2 * math.cos(theta) ** 2 * U**6
        ratio = fr.fieldline_curvature[0] ** 2 / expected
        show("7", dlogE_ratio=float(ratio))
        assert abs(ratio - 1) <= 0.1


MULTIPOLE = MultipoleField.from_dict_coefficients(
    {(0, 0): 1.0, (1, 0): 0.1, (1, 1): -0.05, (2, 0): 0.04, (2, -2): 0.02, (3, 1): 0.01, (4, 0): 0.01,
     (4, 3): -0.005})


@pytest.mark.criterion(8, "identity suite")
@pytest.mark.parametrize(
    "field,r_min,r_max,level,spec",
    [
        (MONOPOLE, 0.5, 2.0, 0.1, SPEC),
        (DIPOLE, 1.0, 3.0, 0.1, SPEC),
        (CAVITY, 0.1, 0.65, 1.0, CAVITY_SPEC),
        (MULTIPOLE, 1.5, 3.0, 0.1, SPEC),
    ],
    ids=["monopole", "dipole", "cavity", "multipole_L4"],
)
def test_identity_suite(field, r_min, r_max, level, spec, rng):
    pts = random_shell(rng, 1000, r_min, r_max)
    cf = closed_form_identities(field, pts)
    fd = pointwise_fd_identities(field, pts)
    suite = identity_suite(field, sample_surface(field, level, spec))
    show("8", normal_logE=cf["normal_logE"]["max"], laplacian_logE=cf["laplacian_logE"]["max"],
         laplacian_n=fd["laplacian_n"]["rel"], laplacian_n_over_E=fd["laplacian_n_over_E"]["rel"],
         weatherburn=suite["weatherburn"]["rel"], h_evolution=suite["h_evolution"]["rel"])
    assert cf["normal_logE"]["max"] <= 1e-10
    assert cf["laplacian_logE"]["max"] <= 1e-10
    assert fd["laplacian_n"]["rel"] <= 1e-4
    assert fd["laplacian_n_over_E"]["rel"] <= 1e-4
    assert suite["weatherburn"]["rel"] <= 1e-4
    assert suite["h_evolution"]["rel"] <= 1e-4


@pytest.mark.criterion(9, "conservation plumbing")
def test_conservation(sweeps):
    spread = max(s.flux_spread for s in sweeps.values())
    gb = max(s.gauss_bonnet_deviation for s in sweeps.values())
    show("9", flux_spread=spread, gauss_bonnet=gb)
    assert spread <= 1e-7
    assert gb <= 1e-7


@pytest.mark.criterion(10, "MFS generalization")
def test_mfs_generalization():
    shape = ConvexShape.ellipsoid(1.0, 0.8, 0.7)
    field, fit = solve_exterior(shape, 1.0, n_sources=1024, residual_cap=None)
    res = sweep(field, fit.boundary_level * np.geomspace(0.1, 0.8, 6), SPEC)
    sphere, _ = solve_exterior(ConvexShape.sphere(), 1.0, n_sources=256)
    mono = [level_report(sample_surface(MONOPOLE, lv, SPEC)) for lv in (0.05, 0.2)]
    fitted = [level_report(sample_surface(sphere, lv, SPEC)) for lv in (0.05, 0.2)]
    sphere_err = max(max(abs(a.W_value - b.W_value), abs(a.F_value - b.F_value), abs(a.flux - b.flux))
                     for a, b in zip(mono, fitted))
    show("10", residual_max=fit.boundary_residual_max, n_check=fit.n_check,
         min_F=min(r.F_value for r in res.reports), monotone=res.monotone, sphere_err=sphere_err)
    assert fit.n_check == 10_000
    assert fit.boundary_residual_max <= 1e-6
    assert all(r.F_value >= -1e-8 for r in res.reports)
    assert res.monotone
    assert sphere_err <= 1e-10


@pytest.mark.criterion(11, "2D conservation")
def test_planar_conservation():
    fld = EllipseExterior(flux=2 * math.pi, scale=1.0, m=0.3)
    res = planar_sweep(fld, [-0.02, -0.1, -0.2, -0.4, -0.6, -0.8, -1.0, -1.4], 512)
    show("11", spread=res.spread, variance=max(res.variance_relative), max_grad_product=max(res.grad_products))
    assert len(res.levels) == 8
    assert res.spread <= 1e-6
    assert max(res.variance_relative) <= 1e-6
    assert all(gp < 0 for gp in res.grad_products)


@pytest.mark.criterion(12, "flow correctness")
def test_flow():
    start = sample_surface(MONOPOLE, 0.1, GridSpec(8, 16)).positions.reshape(-1, 3)
    end = flow_trace(MONOPOLE, start, 0.025, steps=32).end
    radial = np.abs(end - 4.0 * start).max()

    dip = AxialDipoleField(1.0, 0.1)
    grid = sample_surface(dip, 0.05, GridSpec(8, 16))
    there = transport_grid(dip, grid, 0.1, steps=64)
    back = flow_trace(dip, there.reshape(-1, 3), 0.05, 64, start_level=0.1).end
    round_trip = np.abs(back - grid.positions.reshape(-1, 3)).max()

    area = area_evolution_residual(DIPOLE, sample_surface(DIPOLE, 0.1, SPEC))["rel"]
    show("12", radial=radial, round_trip=round_trip, area_evolution=area)
    assert radial <= 1e-10
    assert round_trip <= 1e-8
    assert area <= 1e-4
