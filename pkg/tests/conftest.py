import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_shell(rng, n, r_min, r_max, center=(0.0, 0.0, 0.0)):
    u = rng.standard_normal((n, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    return np.asarray(center) + rng.uniform(r_min, r_max, n)[:, None] * u


def fd_jet(f, points, h=1e-4):
    """Central-difference gradient and Hessian of a value-only function."""
    points = np.atleast_2d(points)
    n = points.shape[0]
    grad = np.zeros((n, 3))
    hess = np.zeros((n, 3, 3))
    eye = np.eye(3)
    f0 = f(points)
    for i in range(3):
        fp, fm = f(points + h * eye[i]), f(points - h * eye[i])
        grad[:, i] = (fp - fm) / (2 * h)
        hess[:, i, i] = (fp - 2 * f0 + fm) / h**2
        for j in range(i + 1, 3):
            d = h * (eye[i] + eye[j])
            e = h * (eye[i] - eye[j])
            v = (f(points + d) - f(points + e) - f(points - e) + f(points - d)) / (4 * h * h)
            hess[:, i, j] = hess[:, j, i] = v
    return grad, hess


# -- acceptance summary ---------------------------------------------------------

_ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        number, label = marker.args
        _, ok = _ACCEPTANCE.get(number, (label, True))
        _ACCEPTANCE[number] = (label, ok and report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, (label, passed) in sorted(_ACCEPTANCE.items()):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {number:>2}. {label}")
