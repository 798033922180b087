"""The Bogovskii potential v, its regularisation v^eps, div v^eps and grad v.

All volume integrals are taken in polar coordinates about the evaluation point
x, with y = x + rho u.  In these coordinates

    N(x, y) rho^(n-1) = -u P_u(rho),   P_u(rho) = int_0^inf psi(x - r u)(r + rho)^(n-1) dr,

so the kernel singularity disappears and P_u is a polynomial in rho whose
coefficients are ray moments of psi.  Moments vanish for directions whose ray
misses supp psi; when x lies outside that ball only a cone of directions is
integrated.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from dataclasses import field as dc_field
from math import comb
from typing import Callable, Sequence

import numpy as np

from . import fieldlang
from .bump import Mollifier, eta_deriv, eta_eval
from .geometry import Ball, GeometryError, StarDomain, verify_star_shaped
from .kernel import KernelContext, ray_moments
from .quadrature import QuadConfig, direction_rule, domain_direction_rule, polar_rule, radial_nodes


class StarShapeError(GeometryError):
    """Raised when the sampled star-shape gate rejects a problem."""


# ------------------------------------------------------------------ data


@dataclass(frozen=True, eq=False)
class ScalarField:
    """The datum F: a vectorised callable on points of shape (..., n)."""

    func: Callable[[np.ndarray], np.ndarray]
    label: str = "F"
    declared_zero_mean: bool = False

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self.func(x), dtype=float), x.shape[:-1])

    @classmethod
    def from_expr(cls, src: str, label: str | None = None, zero_mean: bool = False) -> "ScalarField":
        return cls(fieldlang.CompiledField(src), label or src, zero_mean)

    @classmethod
    def constant(cls, c: float) -> "ScalarField":
        return cls(lambda x: np.full(np.shape(x)[:-1], float(c)), f"{c!r}", c == 0)

    def scaled(self, x0, R: float) -> "ScalarField":
        """z -> F(x0 + R z)."""
        x0 = np.asarray(x0, dtype=float)
        return ScalarField(lambda z: self.func(x0 + R * np.asarray(z, float)), f"{self.label}@scaled",
                           self.declared_zero_mean)

    def combine(self, a: float, other: "ScalarField", b: float) -> "ScalarField":
        """a * self + b * other."""
        return ScalarField(lambda x: a * self(x) + b * other(x), f"{a}*({self.label})+{b}*({other.label})")


@dataclass(frozen=True)
class EpsilonSchedule:
    values: tuple

    def __post_init__(self):
        v = tuple(float(e) for e in self.values)
        if not v:
            raise ValueError("epsilon schedule is empty")
        if any(e <= 0 for e in v) or any(b >= a for a, b in zip(v, v[1:])):
            raise ValueError("epsilon schedule must be positive and strictly decreasing")
        object.__setattr__(self, "values", v)

    def __iter__(self):
        return iter(self.values)

    def __len__(self):
        return len(self.values)


DEFAULT_SCHEDULE = EpsilonSchedule((1e-1, 3e-2, 1e-2, 3e-3, 1e-3))


def default_big_ball(domain, factor: float = 1.25) -> Ball:
    """Ball about the center-ball center with radius factor * (bounding radius) + 1."""
    c = domain.center_ball.c
    bb = domain.bounding_ball
    rb = float(np.linalg.norm(bb.c - c) + bb.radius)
    return Ball(tuple(c), factor * rb + 1.0)


def _binom_poly(A: np.ndarray, N: int, rho: np.ndarray) -> np.ndarray:
    """sum_m C(N, m) rho^m A[:, N - m] for A of shape (D, P[, k]) and rho (D, Q)."""
    out = 0.0
    for m in range(N + 1):
        coef = comb(N, m) * rho**m
        a = A[:, None, N - m]
        out = out + (coef[..., None] * a if a.ndim == 3 else coef * a)
    return out


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("BGK_THREADS", "1")))
    except ValueError:
        return 1


def map_points(fn, points, threads: int | None = None) -> np.ndarray:
    """Apply a single-point evaluator to each row of ``points`` (optionally threaded)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    threads = threads or _threads()
    if threads > 1 and len(pts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            out = list(ex.map(fn, pts))
    else:
        out = [fn(p) for p in pts]
    return np.array(out)


# ------------------------------------------------------------------ potential


@dataclass(frozen=True, eq=False)
class PotentialField:
    """v(x) = int_Omega F(y) N(x, y) dy together with its regularisation and derivatives."""

    ctx: KernelContext
    field: ScalarField
    big_ball: Ball
    quad: QuadConfig = dc_field(default_factory=QuadConfig)

    def __post_init__(self):
        bb = self.domain.bounding_ball
        if np.linalg.norm(bb.c - self.big_ball.c) + bb.radius >= self.big_ball.radius:
            raise GeometryError("domain is not strictly inside the big ball B_R")

    @property
    def domain(self) -> StarDomain:
        return self.ctx.domain

    @property
    def dim(self) -> int:
        return self.ctx.dim

    def contains(self, x) -> np.ndarray:
        return self.domain.contains(x)

    def psi_at(self, x) -> float:
        return float(self.ctx.mollifier(x))

    # -------------------------------------------------------------- helpers
    def _cone(self, x):
        b = self.ctx.mollifier.support_ball
        off = x - b.c
        d = float(np.linalg.norm(off))
        if d <= b.radius * (1 + 1e-12):
            return None
        return off, float(np.arcsin(b.radius / d))

    def _moments(self, x, dirs, grad=False):
        # rays x - r u, i.e. from x away from y = x + rho u
        return ray_moments(self.ctx, np.broadcast_to(x, dirs.shape), -dirs, self.dim, grad=grad)

    def _F_masked(self, pts, mask):
        out = np.zeros(pts.shape[:-1])
        if np.any(mask):
            out[mask] = self.field(pts[mask])
        return out

    def _point(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise GeometryError(f"expected a point of dimension {self.dim}")
        return x

    # -------------------------------------------------------------- v and v^eps
    def v_eval(self, x, short_circuit: bool = True, cfg: QuadConfig | None = None) -> np.ndarray:
        """v(x); exact zero outside the domain unless ``short_circuit`` is off."""
        x = self._point(x)
        if short_circuit and not self.contains(x):
            return np.zeros(self.dim)
        return self._v_integral(x, None, cfg or self.quad)

    def v_eps_eval(self, x, eps: float, cfg: QuadConfig | None = None) -> np.ndarray:
        if not eps > 0:
            raise ValueError("eps must be positive")
        x = self._point(x)
        if not self.contains(x):
            return np.zeros(self.dim)
        return self._v_integral(x, eps, cfg or self.quad)

    def _v_integral(self, x, eps, cfg):
        n = self.dim
        bps = () if eps is None else (eps, 1.5 * eps, 2 * eps)
        rule = polar_rule(x, self.domain, cfg, bps, jacobian=False, cone=self._cone(x))
        M = self._moments(x, rule.dirs)
        pts = rule.points
        vals = self._F_masked(pts, rule.weights != 0) * _binom_poly(M, n - 1, rule.rho)
        if eps is not None:
            vals = vals * eta_eval(rule.rho / eps)
        s = np.sum(rule.weights * vals, axis=1)
        return -(s @ rule.dirs)

    # -------------------------------------------------------------- div v^eps
    def div_v_eps(self, x, eps: float, cfg: QuadConfig | None = None) -> float:
        """-psi(x) int F eta + int_{eps<|x-y|<2 eps} F |x-y|^(1-n) eta'/eps P dy."""
        cfg = cfg or self.quad
        x = self._point(x)
        if not self.contains(x):
            raise GeometryError("div_v_eps needs an interior point")
        if not 0 < eps < float(self.domain.boundary_distance(x)) / 2:
            raise ValueError("cutoff reaches boundary")
        n = self.dim
        total = 0.0
        psi_x = float(self.ctx.mollifier(x))
        if psi_x != 0.0:
            rule = polar_rule(x, self.domain, cfg, (eps, 1.5 * eps, 2 * eps))
            vals = self.field(rule.points) * eta_eval(rule.rho / eps)
            total -= psi_x * float(np.sum(rule.weights * vals))
        dirs, wa = direction_rule(n, cfg, None, self._cone(x))
        M = self._moments(x, dirs)
        rho, w = radial_nodes(np.full(len(dirs), eps), np.full(len(dirs), 2 * eps), cfg, False, (1.5 * eps,))
        pts = x + rho[..., None] * dirs[:, None, :]
        vals = self.field(pts) * eta_deriv(rho / eps) / eps * _binom_poly(M, n - 1, rho)
        total += float(np.sum(wa[:, None] * w * vals))
        return total

    # -------------------------------------------------------------- grad v
    def grad_v(self, x, cfg: QuadConfig | None = None, with_error: bool = False):
        """Matrix [i, j] = d v_i / d x_j from the three-term representation."""
        cfg = cfg or self.quad
        x = self._point(x)
        if not self.contains(x):
            raise GeometryError("grad_v needs an interior point")
        val = self._grad_terms(x, cfg)
        if not with_error:
            return val
        coarse = self._grad_terms(x, cfg.coarsened(self.dim))
        return val, float(np.max(np.abs(val - coarse)))

    def grad_v_terms(self, x, cfg: QuadConfig | None = None):
        """The three terms separately (for diagnostics)."""
        return self._grad_terms(self._point(x), cfg or self.quad, split=True)

    def _grad_terms(self, x, cfg, split=False):
        n = self.dim
        dom = self.domain
        Fx = float(self.field(x))
        dirs, wa = domain_direction_rule(dom, x, cfg, self._cone(x))
        M, D = self._moments(x, dirs, grad=True)
        rho_star = dom.ray_exit(x, dirs)
        # exit distance from the big ball B_R
        d = x - self.big_ball.c
        b = dirs @ d
        L = -b + np.sqrt(b * b - (d @ d - self.big_ball.radius**2))

        Dk = D.copy()
        if self.ctx.drop_dpsi_in_K:
            Dk[:, n] = 0.0  # the m = 0 gradient term is the one inside K

        def kernel(rho):
            # rho * dN rho^(n-1): [d_ij P(rho) - u_i Q_j(rho)]
            P = _binom_poly(M, n - 1, rho)
            Q = _binom_poly(Dk, n, rho)
            return P[..., None, None] * np.eye(n) - dirs[:, None, :, None] * Q[..., None, :]

        # term 1, inside the domain: [F(y) - F(x)] dN
        r1, w1 = radial_nodes(np.zeros(len(dirs)), rho_star, cfg, True)
        pts1 = x + r1[..., None] * dirs[:, None, :]
        diff1 = (self.field(pts1) - Fx) / r1
        t1 = np.einsum("d,dq,dqij->ij", wa, w1 * diff1, kernel(r1))
        # term 1, beyond the first exit: F extended by zero (re-entry by indicator)
        panels = cfg.radial_panels if dom.convex else 4 * cfg.radial_panels
        r2, w2 = radial_nodes(rho_star, L, replace(cfg, radial_panels=panels), False)
        pts2 = x + r2[..., None] * dirs[:, None, :]
        inside = np.zeros(r2.shape, bool) if dom.convex else dom.contains(pts2) & (w2 != 0)
        diff2 = (self._F_masked(pts2, inside) - Fx) / np.where(r2 > 0, r2, 1.0)
        t1 = t1 + np.einsum("d,dq,dqij->ij", wa, w2 * diff2, kernel(r2))

        # term 2: F(x) times the formula with d_j psi, integrated over B_R (rho-integral exact)
        S = sum(comb(n - 1, m) * (L ** (m + 1) / (m + 1))[:, None] * D[:, n - 1 - m] for m in range(n))
        t2 = -Fx * np.einsum("d,di,dj->ij", wa, dirs, S)

        # term 3: -F(x) int_{dB_R} N_i nu_j dsigma, parametrised by directions from x
        nu = (x + L[:, None] * dirs - self.big_ball.c) / self.big_ball.radius
        PL = _binom_poly(M, n - 1, L[:, None])[:, 0]
        t3 = Fx * np.einsum("d,di,dj->ij", wa * PL / np.sum(dirs * nu, axis=-1), dirs, nu)
        if split:
            return t1, t2, t3
        return t1 + t2 + t3

    def div_v(self, x, cfg: QuadConfig | None = None) -> float:
        """div v(x) as the trace of grad_v."""
        return float(np.trace(self.grad_v(x, cfg)))

    # -------------------------------------------------------------- batch helpers
    def v_many(self, points, **kw) -> np.ndarray:
        return map_points(lambda p: self.v_eval(p, **kw), points)

    def div_many(self, points) -> np.ndarray:
        return map_points(self.div_v, points)


# ------------------------------------------------------------------ scaled problems


@dataclass(frozen=True, eq=False)
class ScaledPotential:
    """v(x) = R w((x - x0)/R) for a potential w solved in the rescaled frame."""

    inner: PotentialField
    x0: np.ndarray
    R: float
    domain: StarDomain
    field: ScalarField

    @property
    def dim(self) -> int:
        return self.inner.dim

    @property
    def ctx(self) -> KernelContext:
        return self.inner.ctx

    def contains(self, x):
        return self.domain.contains(x)

    def psi_at(self, x) -> float:
        return self.inner.psi_at(self._z(x)) / self.R**self.dim

    def _z(self, x):
        return (np.asarray(x, dtype=float) - self.x0) / self.R

    def v_eval(self, x, short_circuit: bool = True, cfg=None):
        return self.R * self.inner.v_eval(self._z(x), short_circuit, cfg)

    def v_eps_eval(self, x, eps, cfg=None):
        return self.R * self.inner.v_eps_eval(self._z(x), eps / self.R, cfg)

    def div_v_eps(self, x, eps, cfg=None):
        return self.inner.div_v_eps(self._z(x), eps / self.R, cfg)

    def grad_v(self, x, cfg=None, with_error=False):
        return self.inner.grad_v(self._z(x), cfg, with_error)

    def div_v(self, x, cfg=None):
        return self.inner.div_v(self._z(x), cfg)

    def v_many(self, points, **kw):
        return map_points(lambda p: self.v_eval(p, **kw), points)

    def div_many(self, points):
        return map_points(self.div_v, points)


def star_gate(domain: StarDomain, ball: Ball, n_samples: int = 2000, seed: int = 0) -> None:
    rep = verify_star_shaped(domain, ball, n_samples, seed)
    if not rep.ok:
        raise StarShapeError(f"domain is not star-shaped with respect to {ball}; witness {rep.worst_pair}")


def dini_advisory(F: ScalarField, domain: StarDomain) -> None:
    """Warn (never refuse) when the sampled Dini check is inconclusive."""
    from .dini import assess

    verdict = assess(F, domain, n_pairs=2000).verdict
    if verdict != "Dini":
        warnings.warn(f"F may not be Dini continuous (sampled verdict: {verdict})", RuntimeWarning, stacklevel=3)


def solve(F: ScalarField, domain: StarDomain, mollifier: Mollifier | None = None, quad: QuadConfig | None = None,
          big_ball: Ball | None = None, br_factor: float = 1.25, gate: bool = True, dini_check: bool = False,
          mutate: bool = False) -> PotentialField:
    """Build the potential for F on a star-shaped domain.

    The mollifier defaults to the normalised bump on the domain's center ball.
    """
    mollifier = mollifier or Mollifier(domain.center_ball)
    if mollifier.dim != domain.dim:
        raise GeometryError("mollifier and domain dimensions differ")
    if gate:
        star_gate(domain, mollifier.support_ball)
    if dini_check:
        dini_advisory(F, domain)
    ctx = KernelContext(mollifier, domain, quad or QuadConfig(), mutate)
    return PotentialField(ctx, F, big_ball or default_big_ball(domain, br_factor), ctx.quad)


def scaled_solve(F: ScalarField, domain: StarDomain, ball: Ball, quad: QuadConfig | None = None,
                 br_factor: float = 1.25, gate: bool = True, mutate: bool = False) -> ScaledPotential:
    """Solve through z = (x - x0)/R with the unit-ball mollifier; v(x) = R w(z)."""
    if gate:
        star_gate(domain, ball)
    x0, R = ball.c, ball.radius
    sdom = domain.scaled(x0, R)
    unit = Mollifier(Ball(tuple(np.zeros(domain.dim)), 1.0))
    inner = solve(F.scaled(x0, R), sdom, unit, quad, br_factor=br_factor, gate=False, mutate=mutate)
    return ScaledPotential(inner, x0, R, domain, F)


def integrate_field(F: ScalarField, domain: StarDomain, cfg: QuadConfig | None = None) -> float:
    """int_Omega F by polar quadrature about the center-ball center."""
    rule = polar_rule(domain.center_ball.c, domain, cfg or QuadConfig())
    mask = rule.weights != 0
    vals = np.zeros(rule.rho.shape)
    vals[mask] = F(rule.points[mask])
    return float(np.sum(rule.weights * vals))
