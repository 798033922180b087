"""Numerical integration: adaptive 1-D, sphere rules and polar volume rules.

Polar rules integrate over a domain in coordinates ``y = c + rho u`` centred at a
(possibly singular) point ``c``; the Jacobian ``rho^(n-1)`` is folded into the
weights.  Angular rules are the trapezoid rule in 2-D (Gauss-Legendre panels
between box corners when a box is involved) and Gauss-Legendre in cos(theta)
times trapezoid in phi in 3-D.  Radial rules are composite Gauss-Legendre with
panel widths growing geometrically away from the centre.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import integrate as _sp_integrate

DEFAULT_ANGULAR = {2: (128,), 3: (24, 48)}


class QuadratureError(ArithmeticError):
    pass


class QuadResult(NamedTuple):
    value: object
    error: float
    converged: bool


@dataclass(frozen=True)
class QuadConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-13
    max_subdivisions: int = 200
    angular_orders: tuple | None = None
    radial_panels: int = 8
    radial_order: int = 16
    radial_grading: float = 1.15
    chord_order: int = 64

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_subdivisions < 1 or self.radial_panels < 1 or self.radial_order < 1:
            raise ValueError("subdivision counts must be >= 1")
        if self.radial_grading < 1:
            raise ValueError("radial_grading must be >= 1")
        if self.angular_orders is not None:
            if isinstance(self.angular_orders, (dict, str)) or not all(
                    isinstance(o, (int, np.integer)) and o >= 1 for o in self.angular_orders):
                raise ValueError("angular_orders must be a sequence of positive integers")
            object.__setattr__(self, "angular_orders", tuple(int(o) for o in self.angular_orders))

    def angular(self, n: int) -> tuple:
        if n not in DEFAULT_ANGULAR:
            raise ValueError("only n = 2, 3 are supported")
        orders = self.angular_orders or DEFAULT_ANGULAR[n]
        orders = tuple(int(o) for o in orders)
        if len(orders) != n - 1:
            raise ValueError(f"need {n - 1} angular orders in dimension {n}")
        return orders

    def refined(self, n: int) -> "QuadConfig":
        """Doubled angular/radial resolution and halved tolerances."""
        return replace(
            self,
            rel_tol=self.rel_tol / 2,
            abs_tol=self.abs_tol / 2,
            angular_orders=tuple(2 * o for o in self.angular(n)),
            radial_panels=2 * self.radial_panels,
        )

    def coarsened(self, n: int) -> "QuadConfig":
        return replace(
            self,
            angular_orders=tuple(max(4, o // 2) for o in self.angular(n)),
            radial_panels=max(1, self.radial_panels // 2),
        )

    @classmethod
    def from_dict(cls, d: dict | None) -> "QuadConfig":
        d = dict(d or {})
        if "angular_orders" in d and d["angular_orders"] is not None:
            d["angular_orders"] = tuple(d["angular_orders"])
        return cls(**d)


@lru_cache(maxsize=None)
def gauss_legendre(k: int):
    x, w = np.polynomial.legendre.leggauss(k)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


# ------------------------------------------------------------------ 1-D


def integrate_1d(f: Callable[[float], float], a: float, b: float, cfg: QuadConfig | None = None) -> QuadResult:
    """Adaptive Gauss-Kronrod integration of a scalar function on [a, b].

    ``converged`` is False when QUADPACK reports it could not meet
    ``max(abs_tol, rel_tol*|I|)`` within ``max_subdivisions``.
    """
    cfg = cfg or QuadConfig()
    if a > b:
        raise ValueError("need a <= b")
    if a == b:
        return QuadResult(0.0, 0.0, True)

    def checked(x):
        v = float(f(x))
        if not math.isfinite(v):
            raise QuadratureError(f"non-finite integrand value {v} at x={x!r}")
        return v

    out = _sp_integrate.quad(
        checked, a, b, epsabs=cfg.abs_tol, epsrel=cfg.rel_tol, limit=cfg.max_subdivisions, full_output=1
    )
    value, err, info = out[0], out[1], out[2]
    converged = len(out) == 3 and err <= max(cfg.abs_tol, cfg.rel_tol * abs(value)) * 1.0001
    return QuadResult(value, err, converged)


# ------------------------------------------------------------------ sphere


def sphere_rule(n: int, cfg: QuadConfig, breaks: Sequence[float] | None = None):
    """Directions (D, n) and weights (D,) on S^{n-1}.

    In 2-D, ``breaks`` (angles) switch from the trapezoid rule to Gauss-Legendre
    panels between consecutive break angles.
    """
    orders = cfg.angular(n)
    if n == 2:
        m = orders[0]
        if breaks is None or len(breaks) == 0:
            th = 2 * np.pi * np.arange(m) / m
            w = np.full(m, 2 * np.pi / m)
        else:
            b = np.sort(np.mod(np.asarray(breaks, float), 2 * np.pi))
            th, w = _paneled_arc(b[0], b[0] + 2 * np.pi, b[1:], m)
        return np.stack([np.cos(th), np.sin(th)], axis=-1), w
    m_cos, m_phi = orders
    x, wx = gauss_legendre(m_cos)
    phi = 2 * np.pi * np.arange(m_phi) / m_phi
    st = np.sqrt(1 - x * x)
    dirs = np.stack(
        [st[:, None] * np.cos(phi)[None, :], st[:, None] * np.sin(phi)[None, :], np.broadcast_to(x[:, None], (m_cos, m_phi))],
        axis=-1,
    ).reshape(-1, 3)
    w = (wx[:, None] * np.full(m_phi, 2 * np.pi / m_phi)[None, :]).reshape(-1)
    return dirs, w


def _paneled_arc(lo: float, hi: float, inner, m: int):
    """Gauss-Legendre panels on [lo, hi] split at the ``inner`` angles (mod 2 pi)."""
    inner = np.mod(np.asarray(inner, float) - lo, 2 * np.pi) + lo
    edges = np.concatenate([[lo], np.sort(inner[(inner > lo) & (inner < hi)]), [hi]])
    spans = np.diff(edges)
    keep = spans > 1e-14
    starts, spans = edges[:-1][keep], spans[keep]
    counts = np.maximum(8, np.round(m * spans / (hi - lo)).astype(int))
    th, w = [], []
    for a, h, k in zip(starts, spans, counts):
        x, wx = gauss_legendre(int(k))
        th.append(a + h * (x + 1) / 2)
        w.append(wx * h / 2)
    return np.concatenate(th), np.concatenate(w)


def cone_rule(n: int, axis, half_angle: float, cfg: QuadConfig, breaks: Sequence[float] | None = None):
    """Directions and weights covering only the cone of directions within
    ``half_angle`` of ``axis``; used when the integrand vanishes outside it.
    In 2-D the arc is further split at ``breaks``."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    orders = cfg.angular(n)
    if n == 2:
        th0 = np.arctan2(axis[1], axis[0])
        inner = () if breaks is None else breaks
        th, w = _paneled_arc(th0 - half_angle, th0 + half_angle, inner, orders[0])
        return np.stack([np.cos(th), np.sin(th)], axis=-1), w
    m_cos, m_phi = orders
    x, wx = gauss_legendre(m_cos)
    lo = np.cos(half_angle)
    c = lo + (1 - lo) * (x + 1) / 2
    wc = wx * (1 - lo) / 2
    phi = 2 * np.pi * np.arange(m_phi) / m_phi
    s = np.sqrt(1 - c * c)
    local = np.stack(
        [s[:, None] * np.cos(phi)[None, :], s[:, None] * np.sin(phi)[None, :], np.broadcast_to(c[:, None], (m_cos, m_phi))],
        axis=-1,
    ).reshape(-1, 3)
    # orthonormal frame whose third vector is the axis
    helper = np.eye(3)[int(np.argmin(np.abs(axis)))]
    e1 = np.cross(axis, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    dirs = local @ np.stack([e1, e2, axis])
    w = (wc[:, None] * np.full(m_phi, 2 * np.pi / m_phi)[None, :]).reshape(-1)
    return dirs, w


def direction_rule(n: int, cfg: QuadConfig, breaks=None, cone=None):
    """Full-sphere rule, or the cone rule when ``cone = (axis, half_angle)``."""
    if cone is None:
        return sphere_rule(n, cfg, breaks)
    return cone_rule(n, cone[0], cone[1], cfg, breaks)


def integrate_sphere(f: Callable[[np.ndarray], np.ndarray], n: int, cfg: QuadConfig | None = None):
    """Integral over S^{n-1} of f(u); f maps (D, n) directions to (D, ...) values."""
    cfg = cfg or QuadConfig()
    dirs, w = sphere_rule(n, cfg)
    vals = np.asarray(f(dirs), dtype=float)
    return np.tensordot(w, vals, axes=(0, 0))


# ------------------------------------------------------------------ radial


def _panel_edges(panels: int, grading: float) -> np.ndarray:
    """Panel edges on [0, 1]; widths grow by ``grading`` away from 0."""
    if grading == 1.0:
        return np.linspace(0.0, 1.0, panels + 1)
    widths = grading ** np.arange(panels)
    return np.concatenate([[0.0], np.cumsum(widths) / widths.sum()])


def radial_nodes(a, b, cfg: QuadConfig, graded: bool = True, breakpoints: Sequence[float] = ()):
    """Composite Gauss-Legendre nodes on per-direction intervals [a, b].

    Returns ``rho`` and ``w`` of shape (D, Q); empty intervals get zero weight.
    The segment from ``a`` to the first breakpoint is graded toward ``a``; the
    remaining segments between breakpoints use uniform panels.
    """
    a = np.asarray(a, dtype=float)
    b = np.maximum(np.asarray(b, dtype=float), a)
    cuts = [a] + [np.clip(bp, a, b) for bp in sorted(breakpoints)] + [b]
    x, wx = gauss_legendre(cfg.radial_order)
    rhos, ws = [], []
    for k, (s0, s1) in enumerate(zip(cuts[:-1], cuts[1:])):
        if k == 0:
            edges = _panel_edges(cfg.radial_panels, cfg.radial_grading if graded else 1.0)
        else:
            edges = _panel_edges(max(1, cfg.radial_panels // 2), 1.0)
        lo, hi = edges[:-1], edges[1:]
        t = (lo[:, None] + (hi - lo)[:, None] * (x[None, :] + 1) / 2).reshape(-1)
        wt = ((hi - lo)[:, None] * wx[None, :] / 2).reshape(-1)
        length = (s1 - s0)[..., None]
        rhos.append(s0[..., None] + length * t)
        ws.append(length * wt)
    return np.concatenate(rhos, axis=-1), np.concatenate(ws, axis=-1)


@dataclass(frozen=True)
class PolarRule:
    """Nodes ``center + rho * dirs`` with weights including the Jacobian."""

    center: np.ndarray
    dirs: np.ndarray  # (D, n)
    rho: np.ndarray  # (D, Q)
    weights: np.ndarray  # (D, Q): angular * radial * rho^(n-1)

    @property
    def points(self) -> np.ndarray:
        return self.center + self.rho[..., None] * self.dirs[:, None, :]

    def integrate(self, values: np.ndarray):
        values = np.asarray(values, dtype=float)
        w = self.weights.reshape(self.weights.shape + (1,) * (values.ndim - 2))
        return np.sum(values * w, axis=(0, 1))


def _graded_axis(lo: float, hi: float, foot: float, h: float, order: int):
    """GL panels on [lo, hi] with edges at foot, foot +- h (2^k - 1)."""
    edges = [lo, hi]
    if lo < foot < hi:
        edges.append(foot)
    step = h
    while True:
        added = False
        for e in (foot - step, foot + step):
            if lo < e < hi:
                edges.append(e)
                added = True
        if not added:
            break
        step = 2 * step + h
    edges = np.unique(edges)
    x, wx = gauss_legendre(order)
    a, b = edges[:-1], edges[1:]
    t = (a[:, None] + (b - a)[:, None] * (x + 1) / 2).ravel()
    w = ((b - a)[:, None] * wx / 2).ravel()
    return t, w


def box_face_rule(x, lo, hi, cfg: QuadConfig):
    """Directions from an interior point ``x`` of a 3-D box through Gauss panels on
    each face; the exit distance is smooth on every face patch."""
    x = np.asarray(x, dtype=float)
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    order = max(4, cfg.angular(3)[0] // 3)
    dirs, wts = [], []
    for k in range(3):
        a, b = [j for j in range(3) if j != k]
        for bound in (lo[k], hi[k]):
            h = abs(bound - x[k])
            ta, wa = _graded_axis(lo[a], hi[a], x[a], h, order)
            tb, wb = _graded_axis(lo[b], hi[b], x[b], h, order)
            q = np.empty((len(ta), len(tb), 3))
            q[..., k] = bound
            q[..., a] = ta[:, None]
            q[..., b] = tb[None, :]
            r = q.reshape(-1, 3) - x
            dist = np.linalg.norm(r, axis=-1)
            dirs.append(r / dist[:, None])
            # solid angle: cos / |r|^2 dA
            wts.append((wa[:, None] * wb[None, :]).ravel() * h / dist**3)
    return np.concatenate(dirs), np.concatenate(wts)


def domain_direction_rule(domain, x, cfg: QuadConfig, cone=None):
    """Direction rule adapted to rays from ``x`` leaving ``domain``.

    Full-sphere integrals from inside a 3-D box use the face rule; a cone keeps
    the cone rule, which concentrates all nodes where the integrand lives.
    """
    n = domain.dim
    if cone is None and getattr(domain, "kind", None) == "box" and n == 3 and bool(domain.contains(x)):
        return box_face_rule(x, domain.params["lo"], domain.params["hi"], cfg)
    return direction_rule(n, cfg, angular_breaks(domain, x), cone)


def angular_breaks(domain, center):
    if getattr(domain, "kind", None) == "box" and domain.dim == 2:
        return domain.corner_angles(center)
    return None


def polar_rule(center, domain, cfg: QuadConfig | None = None, breakpoints: Sequence[float] = (), jacobian: bool = True,
               cone=None) -> PolarRule:
    """Polar rule for the integral over ``domain`` centred at ``center``.

    Handles centres inside the domain (first exit plus, for non-convex radial
    shapes, an indicator-weighted pass beyond it) and centres outside (exact
    chord for convex shapes, indicator weighting otherwise).  ``cone`` restricts
    the directions to a cone (axis, half_angle) outside which the caller's
    integrand vanishes.
    """
    cfg = cfg or QuadConfig()
    c = np.asarray(center, dtype=float)
    n = c.shape[-1]
    dirs, wa = domain_direction_rule(domain, c, cfg, cone)
    inside = bool(domain.contains(c))
    if inside:
        rho_out = domain.ray_exit(c, dirs)
        rho, w = radial_nodes(np.zeros(len(dirs)), rho_out, cfg, True, breakpoints)
        if not domain.convex:
            far = np.full(len(dirs), _far(domain, c))
            r2, w2 = radial_nodes(rho_out, far, replace(cfg, radial_panels=4 * cfg.radial_panels), False)
            w2 = w2 * domain.contains(c + r2[..., None] * dirs[:, None, :])
            rho, w = np.concatenate([rho, r2], axis=1), np.concatenate([w, w2], axis=1)
    elif domain.convex:
        t_in, t_out = domain.ray_interval(c, dirs)
        rho, w = radial_nodes(t_in, t_out, cfg, False, breakpoints)
    else:
        far = np.full(len(dirs), _far(domain, c))
        rho, w = radial_nodes(np.zeros(len(dirs)), far, replace(cfg, radial_panels=4 * cfg.radial_panels), False, breakpoints)
        w = w * domain.contains(c + rho[..., None] * dirs[:, None, :])
    if jacobian:
        w = w * rho ** (n - 1)
    return PolarRule(c, dirs, rho, w * wa[:, None])


def _far(domain, c) -> float:
    bb = domain.bounding_ball
    return float(np.linalg.norm(c - bb.c) + bb.radius)


def integrate_polar(f: Callable[[np.ndarray], np.ndarray], center, domain, cfg: QuadConfig | None = None,
                    breakpoints: Sequence[float] = (), with_error: bool = False, cone=None):
    """Integral of f over ``domain`` in polar coordinates about ``center``.

    f maps points (D, Q, n) to values (D, Q) or (D, Q, k).  A singularity
    ``|y - center|^(1-n)`` is cancelled by the Jacobian.  With ``with_error``
    a QuadResult is returned whose error is the difference to a half-resolution
    rule.
    """
    cfg = cfg or QuadConfig()
    rule = polar_rule(center, domain, cfg, breakpoints, cone=cone)
    val = rule.integrate(f(rule.points))
    if not with_error:
        return val
    n = rule.dirs.shape[-1]
    coarse = polar_rule(center, domain, cfg.coarsened(n), breakpoints, cone=cone)
    cval = coarse.integrate(f(coarse.points))
    err = float(np.max(np.abs(np.asarray(val) - cval)))
    tol = max(cfg.abs_tol, cfg.rel_tol * float(np.max(np.abs(val))))
    return QuadResult(val, err, err <= tol)
