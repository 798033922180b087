"""Localisation of F over a chain of overlapping star-shaped pieces.

The weights are chi_i = theta_i / sum_j theta_j with theta_i a smooth step of
the depth inside piece i, computed in the log domain so the ratio stays exact
where all theta are tiny.  Zero mean on every piece is restored by moving the
running mean of chi_i F through normalised bumps phi_i on the overlap witness
balls.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .bump import Mollifier
from .geometry import GeometryError, UnionDomain
from .potential import ScalarField, map_points, scaled_solve
from .quadrature import QuadConfig, polar_rule


class CompatibilityError(ValueError):
    pass


def log_smoothstep(t) -> np.ndarray:
    """log S(t) with S = f(t)/(f(t) + f(1 - t)), f(t) = exp(-1/t); S = 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        a = np.where(t > 0, -1.0 / np.where(t > 0, t, 1.0), -np.inf)
        b = np.where(t < 1, -1.0 / np.where(t < 1, 1 - t, 1.0), -np.inf)
        return np.where(t >= 1, 0.0, np.where(t <= 0, -np.inf, a - np.logaddexp(a, b)))


@dataclass(frozen=True, eq=False)
class Partition:
    union: UnionDomain
    offsets: tuple  # plateau width delta_i per piece
    bumps: tuple  # Mollifier per overlap witness ball

    def _log_theta(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.stack([log_smoothstep(p.depth(x) / d) for p, d in zip(self.union.pieces, self.offsets)], axis=-1)

    def chis(self, x) -> np.ndarray:
        """All weights at x, shape (..., N); zero outside the union."""
        lt = self._log_theta(x)
        with np.errstate(invalid="ignore"):
            tot = logsumexp(lt, axis=-1, keepdims=True)
            out = np.exp(lt - tot)
        return np.where(np.isfinite(tot), out, 0.0)

    def chi(self, i: int, x) -> np.ndarray:
        return self.chis(x)[..., i]

    def phi(self, i: int, x) -> np.ndarray:
        return self.bumps[i](x)


def build_partition(u: UnionDomain, offset_factor: float = 0.25) -> Partition:
    """Plateau width = offset_factor * (diameter of the smallest adjacent overlap ball)."""
    N = len(u.pieces)
    if len(u.overlaps) != N - 1:
        raise GeometryError("need one overlap witness per consecutive pair of pieces")
    offsets = []
    for i in range(N):
        adj = [u.overlaps[k].radius for k in (i - 1, i) if 0 <= k < N - 1]
        width = 2 * min(adj) if adj else min(p.diameter for p in u.pieces)
        offsets.append(offset_factor * width)
    for b in u.overlaps:
        if not b.radius > 0:
            raise GeometryError("empty overlap witness")
    return Partition(u, tuple(offsets), tuple(Mollifier(b) for b in u.overlaps))


@dataclass(frozen=True, eq=False)
class LocalizedField:
    """F_i = chi_i F + m_{i-1} phi_{i-1} - m_i phi_i (missing terms at the chain ends)."""

    F: ScalarField
    partition: Partition
    i: int
    m_prev: float
    m_here: float

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        p = self.partition
        chi = p.chi(self.i, x)
        out = np.zeros(x.shape[:-1])
        mask = chi > 0
        if np.any(mask):
            out[mask] = chi[mask] * self.F(x[mask])
        N = len(p.union.pieces)
        if self.i > 0:
            out = out + self.m_prev * p.phi(self.i - 1, x)
        if self.i < N - 1:
            out = out - self.m_here * p.phi(self.i, x)
        return out


def _piece_integral(f, piece, cfg) -> float:
    rule = polar_rule(piece.center_ball.c, piece, cfg)
    return float(np.sum(rule.weights * f(rule.points)))


def localize(F: ScalarField, u: UnionDomain, p: Partition, cfg: QuadConfig | None = None,
             tol: float = 1e-6) -> list:
    """Zero-mean pieces F_i with supp F_i in piece i and sum_i F_i = F."""
    # uniform radial panels: the weights switch off near piece boundaries, far from the center
    cfg = cfg or QuadConfig(radial_panels=16, radial_grading=1.0).refined(u.dim)
    N = len(u.pieces)
    masses = []
    for i, piece in enumerate(u.pieces):
        g = LocalizedField(F, p, i, 0.0, 0.0)
        masses.append(_piece_integral(g, piece, cfg))
    m = np.cumsum(masses)
    scale = max(1.0, sum(_piece_integral(lambda y: np.abs(F(y)) * p.chi(i, y), piece, cfg)
                         for i, piece in enumerate(u.pieces)))
    if abs(m[-1]) > tol * scale:
        raise CompatibilityError(f"compatibility condition violated: integral of F is {m[-1]:.3e}")
    return [ScalarField(LocalizedField(F, p, i, float(m[i - 1]) if i > 0 else 0.0, float(m[i])),
                        f"{F.label}[{i}]", True) for i in range(N)]


@dataclass(frozen=True, eq=False)
class CompositePotential:
    """v = sum_k v_k with v_k the scaled solve on piece k."""

    union: UnionDomain
    field: ScalarField
    parts: tuple
    fields: tuple

    @property
    def dim(self) -> int:
        return self.union.dim

    @property
    def domain(self) -> UnionDomain:
        return self.union

    def contains(self, x):
        return self.union.contains(x)

    def psi_at(self, x) -> float:
        # every localized field has zero mean, so the psi term never enters
        return 0.0

    def v_eval(self, x, short_circuit: bool = True, cfg=None):
        x = np.asarray(x, dtype=float)
        if short_circuit and not self.contains(x):
            return np.zeros(self.dim)
        return sum(v.v_eval(x, short_circuit, cfg) for v in self.parts)

    def v_eps_eval(self, x, eps, cfg=None):
        return sum(v.v_eps_eval(x, eps, cfg) for v in self.parts)

    def div_v_eps(self, x, eps, cfg=None):
        return sum(v.div_v_eps(x, eps, cfg) for v in self.parts if v.contains(x))

    def grad_v(self, x, cfg=None):
        x = np.asarray(x, dtype=float)
        if not self.contains(x):
            raise GeometryError("grad_v needs an interior point")
        out = np.zeros((self.dim, self.dim))
        for v in self.parts:
            if v.contains(x):
                out = out + v.grad_v(x, cfg)
        return out

    def div_v(self, x, cfg=None):
        return float(np.trace(self.grad_v(x, cfg)))

    def v_many(self, points, **kw):
        return map_points(lambda q: self.v_eval(q, **kw), points)

    def div_many(self, points):
        return map_points(self.div_v, points)


def solve_union(F: ScalarField, u: UnionDomain, quad: QuadConfig | None = None, gate: bool = True,
                mutate: bool = False) -> CompositePotential:
    p = build_partition(u)
    fields = localize(F, u, p)
    parts = tuple(scaled_solve(Fi, piece, piece.center_ball, quad, gate=gate, mutate=mutate)
                  for Fi, piece in zip(fields, u.pieces))
    return CompositePotential(u, F, parts, tuple(fields))


def union_boundary_lines(u: UnionDomain, m: int, per_piece: int = 400):
    """``m`` points of the union boundary with inward unit directions toward the
    owning piece's center-ball center."""
    pts, dirs = [], []
    for k, piece in enumerate(u.pieces):
        bp = piece.boundary_points(per_piece)
        others = [q for j, q in enumerate(u.pieces) if j != k]
        keep = np.ones(len(bp), bool)
        for q in others:
            keep &= q.depth(bp) <= 1e-9
        d = piece.center_ball.c - bp[keep]
        pts.append(bp[keep])
        dirs.append(d / np.linalg.norm(d, axis=-1, keepdims=True))
    pts, dirs = np.vstack(pts), np.vstack(dirs)
    idx = np.linspace(0, len(pts) - 1, m).round().astype(int)
    return pts[idx], dirs[idx]
