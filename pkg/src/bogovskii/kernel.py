"""The Bogovskii kernel N(x, y), its derivative matrix and the K + G split.

Every ray integral is truncated to the exact chord of the ray with the support
ball of psi and evaluated by Gauss-Legendre on that chord.

Notation: ``z = x - y``, ``e = z / |z|``.  Along the ray ``x + r e`` define the
moments ``M_p = int psi r^p dr`` and ``D_p = int grad(psi) r^p dr``.  Expanding
``(r + |z|)^k`` binomially in the derivative formula gives

    dN_ij = |z|^-n [ d_ij sum_m C(n-1,m) |z|^m M_{n-1-m} + e_i sum_m C(n,m) |z|^m D_{n-m,j} ]

whose m = 0 terms form the Calderon-Zygmund part K and the rest the weakly
singular part G.  ``kernel_dN`` is assembled as K + G.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

from .bump import Mollifier
from .geometry import sample_in, sphere_directions
from .quadrature import QuadConfig, cone_rule, gauss_legendre, polar_rule, sphere_rule


class KernelDiagonalError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class KernelContext:
    mollifier: Mollifier
    domain: object
    quad: QuadConfig = field(default_factory=QuadConfig)
    drop_dpsi_in_K: bool = False  # mutation switch for the non-vacuity test

    @property
    def dim(self) -> int:
        return self.mollifier.dim

    def xi_max(self, y) -> np.ndarray:
        """Truncation bound |y - x0| + R for the xi-integral."""
        b = self.mollifier.support_ball
        return np.linalg.norm(np.asarray(y, float) - b.c, axis=-1) + b.radius


# ------------------------------------------------------------------ rays


def chord(ctx: KernelContext, origin, d, lower=0.0, order: int | None = None):
    """Gauss nodes/weights for t >= lower on the chord {origin + t d} inside supp psi.

    ``d`` need not be a unit vector.  Returns (t, w) of shape (..., Q); rays that
    miss the support get zero weights.
    """
    origin = np.asarray(origin, dtype=float)
    d = np.asarray(d, dtype=float)
    b = ctx.mollifier.support_ball
    p = origin - b.c
    A = np.sum(d * d, axis=-1)
    B = np.sum(p * d, axis=-1)
    C = np.sum(p * p, axis=-1) - b.radius**2
    disc = B * B - A * C
    sq = np.sqrt(np.maximum(disc, 0.0))
    t1 = (-B - sq) / A
    t2 = (-B + sq) / A
    lo = np.maximum(t1, lower)
    length = np.where(disc > 0, np.maximum(t2 - lo, 0.0), 0.0)
    x, w = gauss_legendre(order or ctx.quad.chord_order)
    t = lo[..., None] + length[..., None] * (x + 1) / 2
    return t, length[..., None] * w / 2


def ray_moments(ctx: KernelContext, origin, e, pmax: int, grad: bool = False):
    """M_p = int_0^inf psi(origin + r e) r^p dr for p = 0..pmax (and D_p if grad).

    Shapes: M (..., pmax+1); D (..., pmax+1, n).
    """
    origin = np.asarray(origin, dtype=float)
    e = np.asarray(e, dtype=float)
    t, w = chord(ctx, origin, e, 0.0)
    pts = origin[..., None, :] + t[..., None] * e[..., None, :]
    powers = t[..., None] ** np.arange(pmax + 1)  # (..., Q, P)
    if grad:
        val, g = ctx.mollifier.value_and_grad(pts)
    else:
        val = ctx.mollifier(pts)
    M = np.einsum("...q,...qp->...p", w * val, powers)
    if not grad:
        return M
    D = np.einsum("...q,...qp,...qj->...pj", w, powers, g)
    return M, D


def _split(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z = x - y
    dist = np.linalg.norm(z, axis=-1)
    if np.any(dist == 0):
        raise KernelDiagonalError("kernel diagonal: x == y")
    return x, y, z, dist


# ------------------------------------------------------------------ N and variants


def ray_integral(ctx: KernelContext, x, y) -> np.ndarray:
    """int_{|x-y|}^inf psi(y + xi e) xi^(n-1) dxi with e = (x-y)/|x-y|."""
    x, y, z, dist = _split(x, y)
    e = z / dist[..., None]
    t, w = chord(ctx, y, e, dist)
    pts = y[..., None, :] + t[..., None] * e[..., None, :]
    return np.sum(w * ctx.mollifier(pts) * t ** (ctx.dim - 1), axis=-1)


def kernel_N(ctx: KernelContext, x, y) -> np.ndarray:
    x, y, z, dist = _split(x, y)
    return z / dist[..., None] ** ctx.dim * ray_integral(ctx, x, y)[..., None]


def kernel_N_alpha(ctx: KernelContext, x, y, phi=None) -> np.ndarray:
    """(x - y) int_1^inf phi(y + a (x - y)) a^(n-1) da; phi defaults to psi.

    ``phi="grad"`` gives the matrix (x_i - y_i) int (d_j psi)(...) a^(n-1) da.
    """
    x, y, z, dist = _split(x, y)
    n = ctx.dim
    t, w = chord(ctx, y, z, 1.0)
    pts = y[..., None, :] + t[..., None] * z[..., None, :]
    if phi == "grad":
        g = ctx.mollifier.grad(pts)
        s = np.einsum("...q,...qj->...j", w * t ** (n - 1), g)
        return z[..., :, None] * s[..., None, :]
    return z * np.sum(w * ctx.mollifier(pts) * t ** (n - 1), axis=-1)[..., None]


def kernel_N_r(ctx: KernelContext, x, y) -> np.ndarray:
    """(x-y)/|x-y|^n int_0^inf psi(x + r e)(|x-y| + r)^(n-1) dr."""
    x, y, z, dist = _split(x, y)
    return kernel_N_z(ctx, x, z)


def kernel_N_z(ctx: KernelContext, x, z) -> np.ndarray:
    """Integrand kernel of the z = x - y form: z/|z|^n int psi(x + r z/|z|)(|z| + r)^(n-1) dr."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    dist = np.linalg.norm(z, axis=-1)
    if np.any(dist == 0):
        raise KernelDiagonalError("kernel diagonal: z == 0")
    n = ctx.dim
    e = z / dist[..., None]
    t, w = chord(ctx, x, e, 0.0)
    pts = x[..., None, :] + t[..., None] * e[..., None, :]
    val = np.sum(w * ctx.mollifier(pts) * (dist[..., None] + t) ** (n - 1), axis=-1)
    return z / dist[..., None] ** n * val[..., None]


# ------------------------------------------------------------------ derivatives


def _KG_parts(ctx: KernelContext, x, z):
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    dist = np.linalg.norm(z, axis=-1)
    if np.any(dist == 0):
        raise KernelDiagonalError("kernel diagonal: z == 0")
    e = z / dist[..., None]
    M, D = ray_moments(ctx, x, e, ctx.dim, grad=True)
    return e, dist, M, D


def _k_from_moments(ctx, e, M, D):
    n = ctx.dim
    eye = np.eye(n)
    k = M[..., n - 1, None, None] * eye
    if not ctx.drop_dpsi_in_K:
        k = k + e[..., :, None] * D[..., n, None, :]
    return k


def kernel_k(ctx: KernelContext, x, z) -> np.ndarray:
    """k_ij(x, z) = |z|^n K_ij(x, z); depends on z only through z/|z|."""
    e, dist, M, D = _KG_parts(ctx, x, z)
    return _k_from_moments(ctx, e, M, D)


def kernel_K(ctx: KernelContext, x, z) -> np.ndarray:
    e, dist, M, D = _KG_parts(ctx, x, z)
    return _k_from_moments(ctx, e, M, D) / dist[..., None, None] ** ctx.dim


def _G_from_moments(ctx, e, dist, M, D):
    n = ctx.dim
    s_psi = sum(comb(n - 1, m) * dist**m * M[..., n - 1 - m] for m in range(1, n))
    s_dpsi = sum(comb(n, m) * (dist**m)[..., None] * D[..., n - m, :] for m in range(1, n + 1))
    G = s_psi[..., None, None] * np.eye(n) + e[..., :, None] * s_dpsi[..., None, :]
    return G / dist[..., None, None] ** n


def kernel_G(ctx: KernelContext, x, y) -> np.ndarray:
    x, y, z, dist = _split(x, y)
    e, dist, M, D = _KG_parts(ctx, x, z)
    return _G_from_moments(ctx, e, dist, M, D)


def kernel_dN(ctx: KernelContext, x, y) -> np.ndarray:
    """Matrix [i, j] = d N_i / d x_j, assembled as K(x, x - y) + G(x, y)."""
    x, y, z, dist = _split(x, y)
    e, dist, M, D = _KG_parts(ctx, x, z)
    K = _k_from_moments(ctx, e, M, D) / dist[..., None, None] ** ctx.dim
    return K + _G_from_moments(ctx, e, dist, M, D)


def kernel_dN_closed(ctx: KernelContext, x, y) -> np.ndarray:
    """dN from the unexpanded (r + |z|)^k form; independent of the K/G bookkeeping."""
    x, y, z, dist = _split(x, y)
    n = ctx.dim
    e = z / dist[..., None]
    t, w = chord(ctx, x, e, 0.0)
    pts = x[..., None, :] + t[..., None] * e[..., None, :]
    val, g = ctx.mollifier.value_and_grad(pts)
    a = np.sum(w * val * (t + dist[..., None]) ** (n - 1), axis=-1)
    b = np.einsum("...q,...qj->...j", w * (t + dist[..., None]) ** n, g)
    return (a[..., None, None] * np.eye(n) + e[..., :, None] * b[..., None, :]) / dist[..., None, None] ** n


# ------------------------------------------------------------------ sphere / volume identities


def sphere_mean_k(ctx: KernelContext, x, cfg: QuadConfig | None = None) -> np.ndarray:
    """int_{|u|=1} k(x, u) du (n x n); vanishes for the correct kernel."""
    x = np.asarray(x, dtype=float)
    cfg = cfg or ctx.quad
    b = ctx.mollifier.support_ball
    off = b.c - x
    dist = float(np.linalg.norm(off))
    if dist > b.radius:
        # k vanishes outside the cone of rays that meet supp psi
        dirs, w = cone_rule(ctx.dim, off, float(np.arcsin(b.radius / dist)), cfg)
    else:
        dirs, w = sphere_rule(ctx.dim, cfg)
    vals = kernel_k(ctx, np.broadcast_to(x, dirs.shape), dirs)
    return np.tensordot(w, vals, axes=(0, 0))


def ibp_volume_integral(ctx: KernelContext, x, cfg: QuadConfig | None = None) -> np.ndarray:
    """int_{R^n} [d_ij psi(x + y) + y_i d_j psi(x + y)] dy by volume quadrature."""
    from .geometry import StarDomain

    x = np.asarray(x, dtype=float)
    b = ctx.mollifier.support_ball
    support = StarDomain.ball(b.c - x, b.radius)
    rule = polar_rule(b.c - x, support, cfg or ctx.quad)
    pts = rule.points
    val, g = ctx.mollifier.value_and_grad(pts + x)
    n = ctx.dim
    integrand = val[..., None, None] * np.eye(n) + pts[..., :, None] * g[..., None, :]
    return rule.integrate(integrand)


# ------------------------------------------------------------------ diagnostics


@dataclass(frozen=True)
class KernelDiagnostics:
    lemma4_constant: float
    thm9_M: float
    g_constant: float
    sphere_mean_residual: float
    homogeneity_residual: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def random_pairs(ctx: KernelContext, m: int, seed: int = 0, min_dist: float = 0.0):
    """``m`` pairs (x, y) of distinct domain points (quasi-random)."""
    x = sample_in(ctx.domain, m, seed=seed)
    y = sample_in(ctx.domain, m, seed=seed + 7919)
    y = np.roll(y, 1, axis=0)
    d = np.linalg.norm(x - y, axis=-1)
    keep = d > max(min_dist, 1e-12)
    return x[keep], y[keep]


def pairs_at_scales(ctx: KernelContext, m: int, rmin: float, rmax: float, seed: int = 0):
    """Pairs with x in the domain and |x - y| log-uniform in [rmin, rmax]."""
    x = sample_in(ctx.domain, m, seed=seed)
    rng = np.random.default_rng(seed)
    u = sphere_directions(ctx.dim, 97)[rng.integers(0, 97, size=m)] if ctx.dim == 2 else _rand_dirs(rng, m, ctx.dim)
    r = np.exp(rng.uniform(np.log(rmin), np.log(rmax), size=m))
    return x, x - r[:, None] * u, r


def _rand_dirs(rng, m, n):
    g = rng.standard_normal((m, n))
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


def measure_diagnostics(ctx: KernelContext, n_pairs: int = 10_000, seed: int = 0) -> KernelDiagnostics:
    n = ctx.dim
    x, y = random_pairs(ctx, n_pairs, seed)
    dist = np.linalg.norm(x - y, axis=-1)
    c_N = float(np.max(np.abs(ray_integral(ctx, x, y))))
    diam = ctx.domain.diameter
    xs, ys, r = pairs_at_scales(ctx, n_pairs, 1e-4, diam, seed)
    dN = kernel_dN(ctx, xs, ys)
    G = kernel_G(ctx, xs, ys)
    M = float(np.max(np.abs(dN) * r[:, None, None] ** n))
    gc = float(np.max(np.abs(G) * r[:, None, None] ** (n - 1)))
    probes = sample_in(ctx.domain, 5, seed=seed + 1)
    smr = max(float(np.max(np.abs(sphere_mean_k(ctx, p)))) for p in probes)
    z = ys - xs
    ks = [kernel_k(ctx, xs[:200], t * z[:200]) for t in (0.1, 1.0, 7.0)]
    hom = float(max(np.max(np.abs(ks[0] - ks[1])), np.max(np.abs(ks[2] - ks[1]))))
    return KernelDiagnostics(c_N, M, gc, smr, hom)
