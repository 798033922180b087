"""The mollifier psi and the cutoff eta.

psi is the standard bump ``C exp(-1/(1 - s^2))``, ``s = |x - x0| / R``, normalised to
unit mass on its support ball.  eta is a slope-2 ramp on [1.25, 1.75] mollified
with a 1-D bump of radius 1/4, so that eta = 0 on [0, 1], eta = 1 on [2, inf) and
0 <= eta' <= 2, all exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from .geometry import Ball, unit_sphere_area
from .quadrature import QuadConfig, gauss_legendre, integrate_1d


def _profile(t: np.ndarray) -> np.ndarray:
    """exp(-1/t) for t > 0, else 0 (t = 1 - s^2)."""
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)


@lru_cache(maxsize=None)
def unit_normalization(n: int) -> float:
    """C_n with C_n * int_B exp(-1/(1-|x|^2)) dx = 1 over the unit ball of R^n."""
    cfg = QuadConfig(rel_tol=1e-13, abs_tol=1e-15)
    val, _, ok = integrate_1d(lambda s: _profile(1 - s * s) * s ** (n - 1), 0.0, 1.0, cfg)
    if not ok:
        raise RuntimeError("normalization quadrature did not converge")
    return 1.0 / (unit_sphere_area(n) * val)


@dataclass(frozen=True)
class Mollifier:
    """Smooth nonnegative bump supported in ``support_ball`` with unit integral."""

    support_ball: Ball

    @property
    def dim(self) -> int:
        return self.support_ball.dim

    @cached_property
    def normalization(self) -> float:
        return unit_normalization(self.dim) / self.support_ball.radius**self.dim

    @property
    def max_value(self) -> float:
        return self.normalization * math.exp(-1.0)

    @cached_property
    def max_grad(self) -> float:
        # |grad psi| = C * 2 s exp(-1/(1-s^2)) / (R (1-s^2)^2) along a radius
        s = np.linspace(0.0, 1.0, 200001)[:-1]
        t = 1 - s * s
        g = 2 * s * _profile(t) / (t * t)
        return float(self.normalization * g.max() / self.support_ball.radius)

    def _s2(self, x):
        x = np.asarray(x, dtype=float)
        c = self.support_ball.c
        d = x - c
        return d, np.sum(d * d, axis=-1) / self.support_ball.radius**2

    def __call__(self, x) -> np.ndarray:
        _, s2 = self._s2(x)
        return self.normalization * _profile(1 - s2)

    def grad(self, x) -> np.ndarray:
        """Analytic gradient, shape (..., n); zero outside the support."""
        d, s2 = self._s2(x)
        t = 1 - s2
        safe = np.where(t > 0, t, 1.0)
        coef = np.where(t > 0, -2 * self.normalization * _profile(t) / (safe * safe), 0.0)
        return coef[..., None] * d / self.support_ball.radius**2

    def value_and_grad(self, x):
        d, s2 = self._s2(x)
        t = 1 - s2
        safe = np.where(t > 0, t, 1.0)
        val = self.normalization * _profile(t)
        coef = np.where(t > 0, -2 * val / (safe * safe), 0.0)
        return val, coef[..., None] * d / self.support_ball.radius**2

    def scaled(self, x0, R: float) -> "Mollifier":
        """Mollifier of the image ball under z = (x - x0)/R."""
        b = self.support_ball
        return Mollifier(Ball(tuple((b.c - np.asarray(x0, float)) / R), b.radius / R))


# ------------------------------------------------------------------ cutoff

_HALF = 0.25  # mollification radius of the ramp
_RAMP = (1.25, 1.75)  # ramp support; slope exactly 2
_CDF_ORDER = 64


@lru_cache(maxsize=None)
def _bump1d_mass() -> float:
    cfg = QuadConfig(rel_tol=1e-14, abs_tol=1e-16)
    return integrate_1d(lambda t: _profile(1 - t * t), -1.0, 1.0, cfg).value


def _partial_moments(s: np.ndarray):
    """Phi(s) = int_{-a}^s phi and T(s) = int_{-a}^s tau phi(tau) dtau for the 1-D
    bump phi of radius a = 1/4 and unit mass."""
    a = _HALF
    q = np.clip(np.asarray(s, dtype=float) / a, -1.0, 1.0)
    # Quadrature only over [-1, -|q|]; phi is even and tau*phi odd, so
    # Phi(s) = 1 - Phi(-s) for s > 0 while T(s) = T(-s).
    upper = -np.abs(q)
    x, w = gauss_legendre(_CDF_ORDER)
    half = (upper + 1.0) / 2
    nodes = -1.0 + half[..., None] * (x + 1.0)
    vals = _profile(1 - nodes * nodes) * (w * half[..., None])
    m0 = vals.sum(axis=-1) / _bump1d_mass()
    m1 = a * (vals * nodes).sum(axis=-1) / _bump1d_mass()
    return np.where(q > 0, 1.0 - m0, m0), m1


def _Psi(s: np.ndarray) -> np.ndarray:
    """Psi(s) = int_{-inf}^s Phi = s Phi(s) - T(s); Psi = 0 for s <= -a, s for s >= a."""
    s = np.asarray(s, dtype=float)
    phi, T = _partial_moments(s)
    inner = s * phi - T
    return np.where(s <= -_HALF, 0.0, np.where(s >= _HALF, s, inner))


class Cutoff:
    """The radial switch eta and its derivative (stateless)."""

    def __call__(self, t):
        return eta_eval(t)

    def deriv(self, t):
        return eta_deriv(t)


def _check_t(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("eta is defined for t >= 0 only")
    return t


def eta_eval(t):
    t = _check_t(t)
    out = 2.0 * (_Psi(t - _RAMP[0]) - _Psi(t - _RAMP[1]))
    out = np.where(t <= 1.0, 0.0, np.where(t >= 2.0, 1.0, out))
    return out if out.ndim else float(out)


def eta_deriv(t):
    t = _check_t(t)
    p0, _ = _partial_moments(t - _RAMP[0])
    p1, _ = _partial_moments(t - _RAMP[1])
    out = 2.0 * (p0 - p1)
    out = np.where((t <= 1.0) | (t >= 2.0), 0.0, out)
    return out if out.ndim else float(out)
