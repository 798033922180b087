import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import simpson
from scipy.special import exp1

from bogovskii.geometry import Ball, StarDomain
from bogovskii.quadrature import (
    QuadConfig,
    QuadratureError,
    box_face_rule,
    cone_rule,
    gauss_legendre,
    integrate_1d,
    integrate_polar,
    integrate_sphere,
    polar_rule,
    radial_nodes,
    sphere_rule,
)


def test_exp_inverse_closed_form_and_simpson():
    # int_0^1 exp(-1/u) du = e^-1 - E1(1); a second route is Simpson on 10^6 intervals
    exact = math.exp(-1) - exp1(1.0)
    u = np.linspace(0, 1, 1_000_001)
    with np.errstate(divide="ignore"):
        simp = simpson(np.where(u > 0, np.exp(-1 / np.where(u > 0, u, 1)), 0.0), x=u)
    assert simp == pytest.approx(exact, rel=1e-11)
    res = integrate_1d(lambda s: math.exp(-1 / s) if s > 0 else 0.0, 0.0, 1.0)
    assert res.converged and res.value == pytest.approx(exact, rel=1e-10)


def test_integrate_1d_rejects_non_finite():
    with pytest.raises(QuadratureError):
        integrate_1d(lambda s: 1 / s if s > 0.5 else math.inf, 0.0, 1.0)
    assert integrate_1d(math.sin, 1.0, 1.0).value == 0.0


def test_integrate_1d_reports_non_convergence():
    cfg = QuadConfig(max_subdivisions=2, rel_tol=1e-14, abs_tol=1e-16)
    assert not integrate_1d(lambda s: math.sin(1 / s) if s > 0 else 0.0, 0.0, 1.0, cfg).converged


@given(st.integers(1, 40))
def test_gauss_legendre_exact(k):
    x, w = gauss_legendre(k)
    for p in range(2 * k):
        assert np.dot(w, x**p) == pytest.approx((1 - (-1) ** (p + 1)) / (p + 1), abs=1e-13)


def test_sphere_moments():
    for n, area in ((2, 2 * math.pi), (3, 4 * math.pi)):
        assert integrate_sphere(lambda u: np.ones(len(u)), n) == pytest.approx(area)
        assert integrate_sphere(lambda u: u[:, 0] ** 2, n) == pytest.approx(area / n)
    assert integrate_sphere(lambda u: u[:, 2] ** 4, 3) == pytest.approx(4 * math.pi / 5)
    dirs, w = sphere_rule(2, QuadConfig(), breaks=[0.3, 2.0, 4.0])
    assert np.dot(w, dirs[:, 1] ** 6) == pytest.approx(2 * math.pi * 5 / 16, rel=1e-12)


@given(st.floats(0.05, 3.0), st.floats(0, 2 * math.pi))
def test_cone_area(a, phase):
    cfg = QuadConfig()
    d2, w2 = cone_rule(2, (math.cos(phase), math.sin(phase)), a, cfg)
    assert w2.sum() == pytest.approx(2 * a, rel=1e-12)
    axis = np.array([math.cos(phase), 0.3, math.sin(phase)])
    d3, w3 = cone_rule(3, axis, a, cfg)
    assert w3.sum() == pytest.approx(2 * math.pi * (1 - math.cos(a)), rel=1e-12)
    assert np.all(d3 @ axis / np.linalg.norm(axis) >= math.cos(a) - 1e-12)


def test_radial_nodes_cover_interval():
    rho, w = radial_nodes(np.array([0.0, 1.0]), np.array([2.0, 1.0]), QuadConfig(), True, breakpoints=[0.5])
    assert w.sum(axis=1) == pytest.approx([2.0, 0.0])
    assert np.sum(w[0] * rho[0] ** 3) == pytest.approx(4.0)


def test_polar_volumes():
    box = StarDomain.box((0, 0), (2, 1))
    tre = StarDomain.radial((0, 0), "1 + 0.2*cos(3*theta)", Ball((0, 0), 0.3))
    cfg = QuadConfig()
    for centre in ((1.0, 0.5), (0.2, 0.9), (3.0, 2.0)):
        assert integrate_polar(lambda y: np.ones(y.shape[:-1]), centre, box, cfg) == pytest.approx(2.0, rel=1e-10)
    area = math.pi * 1.02
    assert integrate_polar(lambda y: np.ones(y.shape[:-1]), (0.0, 0.0), tre, cfg) == pytest.approx(area, rel=1e-10)
    # near the boundary the exit distance varies sharply with angle and needs more directions
    fine = QuadConfig(angular_orders=(2048,))
    assert integrate_polar(lambda y: np.ones(y.shape[:-1]), (0.9, 0.1), tre, fine) == pytest.approx(area, rel=1e-10)
    ball3 = StarDomain.ball((0, 0, 0), 1.5)
    val = integrate_polar(lambda y: y[..., 0] ** 2, (0.2, 0.1, 0.0), ball3, cfg)
    assert val == pytest.approx(4 * math.pi * 1.5**5 / 15, rel=1e-10)


def test_polar_cancels_weak_singularity():
    # int_{B(0,1)} |y|^{-1} dy = 2 pi in R^2
    disk = StarDomain.ball((0, 0), 1.0)
    rule = polar_rule((0.0, 0.0), disk, QuadConfig())
    vals = 1 / np.linalg.norm(rule.points, axis=-1)
    assert rule.integrate(vals) == pytest.approx(2 * math.pi, rel=1e-12)


def test_config_round_trip():
    cfg = QuadConfig.from_dict({"radial_order": 20, "rel_tol": 1e-8})
    assert cfg.radial_order == 20 and cfg.rel_tol == 1e-8
    assert cfg.refined(2).angular(2)[0] > cfg.angular(2)[0]
    with pytest.raises((TypeError, ValueError)):
        QuadConfig.from_dict({"bogus": 1})
    with pytest.raises(ValueError):
        QuadConfig(angular_orders={2: (64,)})


@settings(max_examples=15)
@given(st.floats(-0.99, 0.99), st.floats(-0.99, 1.49), st.floats(-0.99, 0.99))
def test_box_face_rule(a, b, c):
    x = np.array([a, b, c])
    dirs, w = box_face_rule(x, (-1, -1, -1), (1, 1.5, 1), QuadConfig())
    assert w.sum() == pytest.approx(4 * math.pi, rel=1e-9)
    assert np.einsum("d,di,dj->ij", w, dirs, dirs) == pytest.approx(4 * math.pi / 3 * np.eye(3), abs=1e-8)
    box = StarDomain.box((-1, -1, -1), (1, 1.5, 1), Ball((0, 0, 0), 0.5))
    assert integrate_polar(lambda y: np.ones(y.shape[:-1]), x, box) == pytest.approx(10.0, rel=1e-10)
