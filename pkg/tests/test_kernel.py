import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bogovskii.bump import Mollifier
from bogovskii.geometry import Ball, StarDomain
from bogovskii.kernel import (
    KernelContext,
    KernelDiagonalError,
    ibp_volume_integral,
    kernel_dN,
    kernel_dN_closed,
    kernel_G,
    kernel_K,
    kernel_k,
    kernel_N,
    kernel_N_alpha,
    kernel_N_r,
    kernel_N_z,
    measure_diagnostics,
    random_pairs,
    ray_moments,
    sphere_mean_k,
)
from bogovskii.quadrature import QuadConfig, integrate_1d

_DISK = StarDomain.ball((0, 0), 2.0, Ball((0, 0), 1.0))
_CTX2 = KernelContext(Mollifier(_DISK.center_ball), _DISK, QuadConfig())


def _adaptive_N(ctx, x, y):
    """Oracle: adaptive 1-D quadrature of the xi form, independent of the chord rule."""
    z = x - y
    d = np.linalg.norm(z)
    e = z / d
    n = len(x)
    b = ctx.mollifier.support_ball
    hi = np.linalg.norm(y - b.c) + b.radius
    if hi <= d:
        return np.zeros(n)
    cfg = QuadConfig(rel_tol=1e-12, abs_tol=1e-15)
    val = integrate_1d(lambda s: float(ctx.mollifier(y + s * e)) * s ** (n - 1), d, hi, cfg).value
    return z / d**n * val


@pytest.mark.parametrize("which", ["ctx2", "ctx3"])
def test_N_against_adaptive_oracle(which, request):
    ctx = request.getfixturevalue(which)
    x, y = random_pairs(ctx, 12, seed=5)
    got = kernel_N(ctx, x, y)
    want = np.array([_adaptive_N(ctx, a, b) for a, b in zip(x, y)])
    assert np.max(np.abs(got - want)) <= 1e-9 * np.max(np.abs(want))


@pytest.mark.parametrize("which", ["ctx2", "ctx3"])
def test_variants_agree(which, request):
    ctx = request.getfixturevalue(which)
    x, y = random_pairs(ctx, 200, seed=1)
    N = kernel_N(ctx, x, y)
    scale = np.max(np.abs(N))
    for other in (kernel_N_alpha(ctx, x, y), kernel_N_r(ctx, x, y), kernel_N_z(ctx, x, x - y)):
        assert np.max(np.abs(N - other)) <= 1e-10 * scale


def test_diagonal_rejected(ctx2):
    with pytest.raises(KernelDiagonalError):
        kernel_N(ctx2, np.array([0.1, 0.2]), np.array([0.1, 0.2]))


def test_zero_outside_domain_of_influence(ctx2):
    # N(x, y) = 0 when the ray from y through x never meets supp psi beyond x
    x = np.array([[1.8, 0.0], [0.0, -1.9]])
    y = np.array([[1.2, 0.0], [0.0, -1.5]])
    assert np.all(kernel_N(ctx2, x, y) == 0.0)


@pytest.mark.parametrize("which", ["ctx2", "ctx3"])
def test_dN_matches_fd_in_x(which, request):
    ctx = request.getfixturevalue(which)
    x, y = random_pairs(ctx, 20, seed=3, min_dist=0.2)
    h = 1e-5
    fd = np.stack([(kernel_N(ctx, x + h * e, y) - kernel_N(ctx, x - h * e, y)) / (2 * h) for e in np.eye(ctx.dim)], -1)
    dN = kernel_dN(ctx, x, y)
    assert np.max(np.abs(dN - fd)) <= 1e-6 * np.max(np.abs(dN))
    closed = kernel_dN_closed(ctx, x, y)
    assert np.max(np.abs(dN - closed)) <= 1e-12 * np.max(np.abs(dN))


def test_split_is_exact(ctx2):
    x, y = random_pairs(ctx2, 50, seed=9)
    assert np.allclose(kernel_K(ctx2, x, x - y) + kernel_G(ctx2, x, y), kernel_dN(ctx2, x, y), rtol=0, atol=1e-13)


@pytest.mark.parametrize("which", ["ctx2", "ctx3"])
def test_shift_identity(which, request):
    ctx = request.getfixturevalue(which)
    x, y = random_pairs(ctx, 30, seed=11)
    h = 1e-6
    dy = np.stack([(kernel_N(ctx, x, y + h * e) - kernel_N(ctx, x, y - h * e)) / (2 * h) for e in np.eye(ctx.dim)], -1)
    rhs = kernel_N_alpha(ctx, x, y, phi="grad")
    assert np.max(np.abs(kernel_dN(ctx, x, y) + dy - rhs)) <= 1e-6 * np.max(np.abs(rhs))


@given(st.floats(1e-3, 1e3), st.floats(0, 2 * math.pi), st.floats(-1.5, 1.5), st.floats(-1.0, 1.0))
def test_k_homogeneous_degree_zero(t, ang, a, b):
    x = np.array([a, b])
    z = np.array([math.cos(ang), math.sin(ang)])
    assert np.allclose(kernel_k(_CTX2, x, t * z), kernel_k(_CTX2, x, z), rtol=1e-12, atol=1e-13)


@pytest.mark.parametrize("x", [(0.0, 0.0), (0.4, -0.3), (1.5, 0.6), (-1.9, 0.1)])
def test_sphere_mean_vanishes(ctx2, x):
    assert np.max(np.abs(sphere_mean_k(ctx2, np.array(x)))) < 1e-8


def test_sphere_mean_vanishes_3d(ctx3):
    for x in ((0.0, 0.0, 0.0), (0.7, 1.2, -0.5)):
        assert np.max(np.abs(sphere_mean_k(ctx3, np.array(x)))) < 1e-7


def test_ibp_volume_identity(ctx2):
    for x in ((0.0, 0.0), (0.5, 0.5)):
        assert np.max(np.abs(ibp_volume_integral(ctx2, np.array(x)))) < 1e-7


def test_mutation_breaks_sphere_mean(ctx2):
    bad = KernelContext(ctx2.mollifier, ctx2.domain, ctx2.quad, drop_dpsi_in_K=True)
    assert np.max(np.abs(sphere_mean_k(bad, np.array([0.2, 0.1])))) > 0.1


def test_moments_of_unit_bump(ctx2):
    # M_1 from the ball centre in any direction: int_0^1 C exp(-1/(1-r^2)) r dr = 1/(2 pi)
    M = ray_moments(ctx2, np.zeros(2), np.array([[1.0, 0.0], [0.6, 0.8]]), 2)
    assert M[:, 1] == pytest.approx([1 / (2 * math.pi)] * 2, rel=1e-12)


def test_diagnostics(ctx2):
    d = measure_diagnostics(ctx2, 500, seed=0)
    bound = (1 + ctx2.domain.diameter) ** 2 * ctx2.mollifier.max_value
    assert 0 < d.lemma4_constant <= bound
    assert d.sphere_mean_residual < 1e-8 and d.homogeneity_residual < 1e-12
