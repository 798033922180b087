"""Sampled modulus of continuity, Dini integral and C_D norm.

The modulus is estimated from below: for each rho the largest |F(x) - F(y)|
over sampled pairs with |x - y| < rho.  Radii are processed from large to small
and half of the pairs at each radius are drawn near the best pair found at the
previous radius, which lets the estimate follow localised singularities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .geometry import sample_in

DINI_RATIO_THRESHOLD = 0.6  # decay ratio of the smallest decade contributions
_ZOOM_SCALES = (1.0, 1e-2, 1e-4, 1e-6, 1e-8)


@dataclass(frozen=True)
class ModulusEstimate:
    rhos: np.ndarray
    omegas: np.ndarray
    n_pairs: int

    def __post_init__(self):
        if len(self.rhos) == 0 or len(self.rhos) != len(self.omegas):
            raise ValueError("rhos and omegas must be nonempty and of equal length")

    @property
    def rho_min(self) -> float:
        return float(self.rhos[0])

    def loglog_slope(self, lo: float | None = None, hi: float | None = None) -> float:
        """Least-squares slope of log omega against log rho over [lo, hi]."""
        r, w = self.rhos, self.omegas
        keep = (w > 0) & (r >= (lo or r[0])) & (r <= (hi or r[-1]))
        if keep.sum() < 2:
            return float("nan")
        return float(np.polyfit(np.log(r[keep]), np.log(w[keep]), 1)[0])


def default_rhos(diam: float, per_decade: int = 40, decades: int = 4) -> np.ndarray:
    """Log-spaced radii from 10^-decades * diam up to diam."""
    return diam * np.logspace(-decades, 0, per_decade * decades + 1)


def _unit_ball_offsets(m: int, n: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((m, n))
    g /= np.linalg.norm(g, axis=-1, keepdims=True)
    return g * rng.random(m)[:, None] ** (1.0 / n)


def default_anchors(domain) -> np.ndarray:
    """Deterministic candidate points: center-ball and bounding-ball centers and the
    coordinate origin, where manufactured singularities usually sit."""
    pieces = getattr(domain, "pieces", (domain,))
    pts = [p.center_ball.c for p in pieces] + [domain.bounding_ball.c, np.zeros(domain.dim)]
    pts = np.unique(np.array(pts, dtype=float), axis=0)
    return pts[domain.contains(pts)]


def modulus(F, domain, rhos=None, n_pairs: int = 20000, seed: int = 0, anchors=None) -> ModulusEstimate:
    """omega(F, rho) ~ sup over sampled pairs with |x - y| < rho of |F(x) - F(y)|.

    Besides quasi-random pairs, every anchor point is paired at every radius with
    a fixed fan of directions; random sampling alone cannot hit a singular point
    exactly, which matters for moduli as slow as 1/log(1/rho).
    """
    rhos = default_rhos(domain.diameter) if rhos is None else np.asarray(rhos, dtype=float)
    if np.any(rhos <= 0) or np.any(np.diff(rhos) <= 0):
        raise ValueError("rhos must be positive and increasing")
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    n = domain.dim
    rng = np.random.default_rng(seed)
    base = sample_in(domain, n_pairs, seed=seed)
    sob = qmc.Sobol(d=n, scramble=True, seed=seed)
    raw = sob.random_base2(int(np.ceil(np.log2(max(2, n_pairs)))))[:n_pairs]
    dirs = _directions(raw, n)
    frac = 0.5 + 0.5 * rng.random(n_pairs)  # |x - y| in [rho/2, rho)
    anchors = default_anchors(domain) if anchors is None else np.atleast_2d(np.asarray(anchors, dtype=float))
    fan = _directions(qmc.Sobol(d=n, scramble=True, seed=seed + 1).random_base2(6), n)
    ax = np.repeat(anchors, len(fan), axis=0)
    afan = np.tile(fan, (len(anchors), 1))
    omegas = np.zeros(len(rhos))
    best, prev_rho = None, None
    for k in range(len(rhos) - 1, -1, -1):
        rho = rhos[k]
        x = base
        if best is not None:
            # zoom: half the pairs start near either end of the previous best pair;
            # offsets at several scales let the endpoint home in on a point singularity
            m = max(1, n_pairs // (2 * len(best) * len(_ZOOM_SCALES)))
            local = np.vstack([b + prev_rho * s * _unit_ball_offsets(m, n, rng) for b in best for s in _ZOOM_SCALES])
            local = local[domain.contains(local)]
            x = np.vstack([local, base[: n_pairs - len(local)]])
        y = x + (rho * (1 - 1e-12)) * frac[: len(x), None] * dirs[: len(x)]
        if len(ax):
            x = np.vstack([x, ax])
            y = np.vstack([y, ax + (rho * (1 - 1e-12)) * afan])
        ok = domain.contains(y)
        if not np.any(ok):
            continue
        d = np.abs(F(x[ok]) - F(y[ok]))
        j = int(np.argmax(d))
        omegas[k] = d[j]
        best, prev_rho = (x[ok][j], y[ok][j]), rho
    # running max makes the estimate nondecreasing in rho
    return ModulusEstimate(rhos, np.maximum.accumulate(omegas), n_pairs)


def _directions(raw: np.ndarray, n: int) -> np.ndarray:
    if n == 2:
        th = 2 * np.pi * raw[:, 0]
        return np.stack([np.cos(th), np.sin(th)], axis=-1)
    z = 2 * raw[:, 0] - 1
    phi = 2 * np.pi * raw[:, 1]
    s = np.sqrt(1 - z * z)
    return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=-1)


def dini_integral(est: ModulusEstimate) -> float:
    """int_{rho_min}^{rho_max} omega(rho)/rho drho, trapezoid in log rho."""
    if len(est.rhos) == 1:
        return 0.0
    return float(np.trapezoid(est.omegas, np.log(est.rhos)))


def decade_contributions(est: ModulusEstimate) -> np.ndarray:
    """Dini integral split into whole decades of rho counted up from rho_min."""
    lr = np.log10(est.rhos)
    edges = lr[0] + np.arange(int(np.floor(lr[-1] - lr[0] + 1e-9)) + 1)
    out = []
    for a, b in zip(edges[:-1], edges[1:]):
        keep = (lr >= a - 1e-9) & (lr <= b + 1e-9)
        if keep.sum() >= 2:
            out.append(float(np.trapezoid(est.omegas[keep], np.log(est.rhos[keep]))))
    return np.array(out)


def grid_max(F, domain, m: int = 4096, seed: int = 0) -> float:
    pts = sample_in(domain, m, seed=seed)
    if hasattr(domain, "boundary_points"):
        bp = domain.boundary_points(512)
        c = domain.center_ball.c
        pts = np.vstack([pts, c + (1 - 1e-12) * (bp - c)])
    return float(np.max(np.abs(F(pts))))


@dataclass(frozen=True)
class DiniAssessment:
    estimate: ModulusEstimate
    integral: float
    max_abs: float
    decades: np.ndarray
    ratio: float
    verdict: str

    @property
    def cd_norm(self) -> float:
        return self.max_abs + self.integral

    @property
    def rho_min(self) -> float:
        return self.estimate.rho_min


def verdict_from(est: ModulusEstimate, threshold: float = DINI_RATIO_THRESHOLD):
    """Classify the decay of the per-decade Dini contributions toward rho -> 0.

    Returns (verdict, q) with q the ratio of the two smallest decades.  Fast
    decay (q < threshold) is "Dini"; slower decay is still "Dini" when the
    ratios are not creeping toward 1 as rho shrinks (Hoelder-like behaviour).
    A 1/log modulus shows ratios increasing toward 1 and is flagged.
    """
    c = decade_contributions(est)
    total = float(np.sum(c))
    if len(c) < 2 or total <= 1e-13 * max(1.0, float(est.omegas[-1])):
        return "Dini", 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(c[1:] > 0, c[:-1] / c[1:], 0.0)
    q0 = float(q[0])
    if q0 < threshold:
        return "Dini", q0
    steady = len(q) > 1 and q0 < 0.9 and q0 <= 1.05 * float(q[1])
    return ("Dini" if steady else "inconclusive/possibly non-Dini"), q0


def assess(F, domain, n_pairs: int = 20000, per_decade: int = 40, decades: int = 4, seed: int = 0,
           anchors=None) -> DiniAssessment:
    est = modulus(F, domain, default_rhos(domain.diameter, per_decade, decades), n_pairs, seed, anchors)
    verdict, ratio = verdict_from(est)
    return DiniAssessment(est, dini_integral(est), grid_max(F, domain, seed=seed), decade_contributions(est),
                          ratio, verdict)


def cd_norm(F, domain, n_pairs: int = 20000, seed: int = 0) -> float:
    """Sampled lower bound of max|F| + int_0^diam omega/rho drho."""
    a = assess(F, domain, n_pairs=n_pairs, seed=seed)
    return a.cd_norm
