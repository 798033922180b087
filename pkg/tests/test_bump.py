import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import simpson

from bogovskii.bump import Cutoff, Mollifier, eta_deriv, eta_eval, unit_normalization
from bogovskii.geometry import Ball, StarDomain, unit_sphere_area
from bogovskii.quadrature import QuadConfig, integrate_polar


@pytest.mark.parametrize("n", [2, 3])
def test_normalization_against_simpson(n):
    # independent route: composite Simpson with 10^6 intervals on the radial profile
    s = np.linspace(0.0, 1.0, 1_000_001)
    with np.errstate(divide="ignore", over="ignore"):
        prof = np.where(s < 1, np.exp(-1.0 / np.maximum(1 - s * s, 1e-300)), 0.0)
    want = 1.0 / (unit_sphere_area(n) * simpson(prof * s ** (n - 1), x=s))
    assert unit_normalization(n) == pytest.approx(want, rel=1e-10)


@pytest.mark.parametrize("ball", [Ball((0, 0), 1.0), Ball((0.3, -0.2), 0.4), Ball((1, 0, 0), 0.7)])
def test_unit_integral(ball):
    psi = Mollifier(ball)
    dom = StarDomain.ball(ball.center, ball.radius, Ball(ball.center, ball.radius / 2))
    val = integrate_polar(lambda y: psi(y), ball.c, dom, QuadConfig().refined(ball.dim))
    assert val == pytest.approx(1.0, abs=1e-10)


def test_support_and_peak():
    psi = Mollifier(Ball((0, 0), 2.0))
    assert psi(np.array([[2.0, 0.0], [0.0, -2.5]])).tolist() == [0.0, 0.0]
    assert float(psi((0.0, 0.0))) == pytest.approx(psi.max_value)
    assert np.all(psi.grad(np.array([[2.0, 0.0], [3.0, 1.0]])) == 0.0)


@given(st.floats(-0.95, 0.95), st.floats(-0.95, 0.95))
def test_grad_matches_central_differences(a, b):
    psi = Mollifier(Ball((0.1, 0.2), 1.3))
    x = np.array([0.1 + a, 0.2 + b])
    h = 1e-6
    fd = np.array([(psi(x + h * e) - psi(x - h * e)) / (2 * h) for e in np.eye(2)])
    assert psi.grad(x) == pytest.approx(fd, abs=1e-7 * psi.max_grad + 1e-12)
    v, g = psi.value_and_grad(x)
    assert float(v) == float(psi(x)) and np.array_equal(g, psi.grad(x))


def test_max_grad_bound():
    psi = Mollifier(Ball((0, 0, 0), 0.8))
    x = np.random.default_rng(2).uniform(-0.8, 0.8, size=(5000, 3))
    assert np.max(np.linalg.norm(psi.grad(x), axis=-1)) <= psi.max_grad * (1 + 1e-6)


@given(st.floats(0.2, 3.0), st.floats(-1, 1), st.floats(-1, 1))
def test_scaled_density(R, a, b):
    psi = Mollifier(Ball((0.5, 0.5), 1.0))
    x0 = np.array([a, b])
    sc = psi.scaled(x0, R)
    z = np.array([[0.1, 0.0], [0.3, 0.2]])
    # psi_scaled(z) = R^n psi(x0 + R z)
    assert sc(z) == pytest.approx(R**2 * psi(x0 + R * z), rel=1e-12, abs=1e-12 * sc.max_value)


def test_eta_plateaus():
    t = np.array([0.0, 0.5, 1.0, 2.0, 5.0])
    assert eta_eval(t).tolist() == [0.0, 0.0, 0.0, 1.0, 1.0]
    assert eta_deriv(t).tolist() == [0.0] * 5
    with pytest.raises(ValueError):
        eta_eval(-0.1)


def test_eta_monotone_and_bounded():
    t = np.linspace(0.9, 2.1, 4001)
    e = eta_eval(t)
    assert np.all(np.diff(e) >= -1e-15) and e.min() >= 0 and e.max() <= 1
    assert np.all(eta_deriv(t) >= 0)


def test_eta_derivative_integrates_to_one():
    t = np.linspace(1.0, 2.0, 200_001)
    assert simpson(eta_deriv(t), x=t) == pytest.approx(1.0, abs=1e-9)


@given(st.floats(1.01, 1.99))
def test_eta_derivative_fd(t):
    h = 1e-6
    fd = (eta_eval(t + h) - eta_eval(t - h)) / (2 * h)
    assert float(eta_deriv(t)) == pytest.approx(fd, abs=1e-7)
    c = Cutoff()
    assert c(t) == eta_eval(t) and c.deriv(t) == eta_deriv(t)


def test_eta_is_smooth_at_plateau_edges():
    for t0 in (1.0, 2.0):
        for s in (1e-3, 1e-2):
            assert abs(float(eta_deriv(t0 + s))) < 1e-30 or abs(float(eta_deriv(t0 - s))) < 1e-30
    assert math.isclose(float(eta_eval(1.5)), 0.5, abs_tol=1e-14)
