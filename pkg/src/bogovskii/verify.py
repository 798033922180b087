"""Executable checks of the kernel and solver properties.

Each check returns a CheckReport with ``passed = measured <= threshold``.
Thresholds encode numerical method error: 1e-6 for pure quadrature identities,
1e-2 for comparisons mixing finite differences and quadrature, 1e-4 for the
finite-difference derivative identities and 1e-8 for identities that only
re-arrange the same integrals.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import qmc

from .bump import Mollifier, eta_deriv, eta_eval
from .decomposition import union_boundary_lines
from .geometry import Ball, StarDomain, UnionDomain, sample_in, sphere_directions, verify_star_shaped
from .kernel import (
    KernelContext,
    ibp_volume_integral,
    kernel_dN,
    kernel_dN_closed,
    kernel_G,
    kernel_k,
    kernel_N,
    kernel_N_alpha,
    kernel_N_r,
    kernel_N_z,
    random_pairs,
    sphere_mean_k,
)
from .potential import EpsilonSchedule, ScalarField, StarShapeError, integrate_field

THRESHOLDS = {
    "quadrature": 1e-6,
    "mixed": 1e-2,
    "fd_identity": 1e-4,
    "exact": 1e-8,
    "outside": 1e-8,
    "decade_ratio": 2.0,
}

LEVELS = {
    "quick": {"pairs": 100, "probes": 3, "exterior": 50, "lines": 20},
    "full": {"pairs": 10_000, "probes": 9, "exterior": 200, "lines": 20},
}


@dataclass(frozen=True)
class CheckReport:
    name: str
    passed: bool
    measured: float
    threshold: float
    samples: int
    notes: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def _report(name, measured, threshold, samples, notes="", passed=None) -> CheckReport:
    measured = float(measured)
    ok = bool(measured <= threshold) if passed is None else bool(passed)
    return CheckReport(name, ok, measured, float(threshold), int(samples), notes)


@dataclass(frozen=True)
class ConvergenceTable:
    """Residuals per (epsilon, probe); rows follow the schedule (epsilon decreasing)."""

    epsilons: tuple
    probes: np.ndarray
    residuals: np.ndarray  # (E, P), NaN for skipped probes
    monotone_flag: bool
    notes: tuple = field(default_factory=tuple)

    def max_residuals(self) -> np.ndarray:
        r = self.residuals[:, ~np.all(np.isnan(self.residuals), axis=0)]
        return np.max(r, axis=1) if r.size else np.zeros(len(self.epsilons))

    def rows(self) -> list:
        return [(e, j, float(self.residuals[i, j])) for i, e in enumerate(self.epsilons)
                for j in range(self.residuals.shape[1]) if not np.isnan(self.residuals[i, j])]


# ------------------------------------------------------------------ manufactured data


def manufactured_ball_expr(R: float = 2.0) -> str:
    """div of u* = (R^2 - |x|^2)^2 (sin x2, cos x1)/16, which vanishes on |x| = R."""
    return f"-({R * R!r} - x1^2 - x2^2)*(x1*sin(x2) + x2*cos(x1))/4"


def manufactured_ball_field(R: float = 2.0) -> ScalarField:
    return ScalarField.from_expr(manufactured_ball_expr(R), zero_mean=True)


def manufactured_ball_u(x, R: float = 2.0) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    w = (R * R - np.sum(x * x, axis=-1)) ** 2 / 16
    return np.stack([w * np.sin(x[..., 1]), w * np.cos(x[..., 0])], axis=-1)


# p = x1 x2 (2 - x1)(2 - x2)(x1 - 1)(x2 - 1) vanishes on the whole L-shaped boundary
LSHAPE_EXPR = (
    "x2*(2-x2)*(x2-1)*((2-x1)*(x1-1) - x1*(x1-1) + x1*(2-x1))*sin(x2)"
    " + x1*(2-x1)*(x1-1)*((2-x2)*(x2-1) - x2*(x2-1) + x2*(2-x2))*cos(x1)"
)


def lshape_union() -> UnionDomain:
    """[0,2]x[0,1] and [0,1]x[0,2] overlapping in the unit square."""
    return UnionDomain((StarDomain.box((0, 0), (2, 1)), StarDomain.box((0, 0), (1, 2))), (Ball((0.5, 0.5), 0.3),))


def lshape_field() -> ScalarField:
    return ScalarField.from_expr(LSHAPE_EXPR, zero_mean=True)


# ------------------------------------------------------------------ sampling helpers


def interior_probes(domain, k: int, frac: float = 0.5) -> np.ndarray:
    """Center-ball centers plus points ``frac`` of the way to the boundary."""
    pieces = domain.pieces if isinstance(domain, UnionDomain) else (domain,)
    out = []
    per = max(1, int(np.ceil(k / len(pieces))))
    for p in pieces:
        c = p.center_ball.c
        out.append(c)
        if per > 1:
            u = sphere_directions(p.dim, per - 1)
            u = u @ _rotation(p.dim)
            out.extend(c + frac * p.ray_exit(c, u)[:, None] * u)
    return np.array(out[:k])


def _rotation(n):
    # fixed irrational rotation so probe rays avoid box corners and axes
    a = 0.3
    if n == 2:
        return np.array([[np.cos(a), np.sin(a)], [-np.sin(a), np.cos(a)]])
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, s, 0], [-s, c, 0], [0, 0, 1]]) @ np.array([[1, 0, 0], [0, c, s], [0, -s, c]])


def exterior_points(domain, m: int, seed: int = 0) -> np.ndarray:
    """Quasi-random points outside the domain within 1.5 bounding radii."""
    bb = domain.bounding_ball
    sampler = qmc.Halton(d=domain.dim, scramble=True, seed=seed)
    out, have = [], 0
    while have < m:
        pts = bb.c + 1.5 * bb.radius * (2 * sampler.random(2 * m) - 1)
        pts = pts[~domain.contains(pts)]
        out.append(pts)
        have += len(pts)
    return np.vstack(out)[:m]


def boundary_lines(domain, m: int):
    """Boundary points with inward unit directions toward the center-ball center."""
    if isinstance(domain, UnionDomain):
        return union_boundary_lines(domain, m)
    b = domain.boundary_points(m)
    d = domain.center_ball.c - b
    return b, d / np.linalg.norm(d, axis=-1, keepdims=True)


def _rel(diff, ref, floor_frac: float = 1e-8) -> float:
    """Max over samples of |diff| / |ref| (max norms), with a floor tied to the global scale."""
    diff = np.abs(np.asarray(diff)).reshape(len(diff), -1).max(axis=1)
    ref = np.abs(np.asarray(ref)).reshape(len(ref), -1).max(axis=1)
    if len(diff) == 0 or diff.max() == 0:
        return 0.0
    floor = floor_frac * max(float(ref.max()), 1e-300)
    return float(np.max(diff / np.maximum(ref, floor)))


def _fd_y(fn, x, y, h):
    n = y.shape[-1]
    cols = [(fn(x, y + h * e) - fn(x, y - h * e)) / (2 * h) for e in np.eye(n)]
    return np.stack(cols, axis=-1)


# ------------------------------------------------------------------ kernel checks


def _contexts(problem):
    if problem.is_union:
        return [KernelContext(Mollifier(p.center_ball), p, problem.quad, problem.mutate) for p in problem.domain.pieces]
    return [KernelContext(Mollifier(problem.mollifier_ball), problem.domain, problem.quad, problem.mutate)]


def check_support(ctxs, m, seed) -> CheckReport:
    worst = 0.0
    for ctx in ctxs:
        x = exterior_points(ctx.domain, m, seed)
        y = sample_in(ctx.domain, m, seed + 3)
        worst = max(worst, float(np.max(np.abs(kernel_N(ctx, x, y)))))
    return _report("kernel_support_outside", worst, THRESHOLDS["outside"], m * len(ctxs))


def check_kernel_bound(ctxs, m, seed) -> CheckReport:
    ratio, measured = 0.0, 0.0
    for ctx in ctxs:
        x, y = random_pairs(ctx, m, seed)
        n = ctx.dim
        c = np.max(np.linalg.norm(kernel_N(ctx, x, y), axis=-1) * np.linalg.norm(x - y, axis=-1) ** (n - 1))
        # (1 + diam)^n max psi for the unit ball, with R in place of 1 in general
        bound = (ctx.mollifier.support_ball.radius + ctx.domain.diameter) ** n * ctx.mollifier.max_value
        if c / bound >= ratio:
            ratio, measured = c / bound, c
    return _report("kernel_bound", ratio, 1.0, m * len(ctxs),
                   f"measured constant {measured:.6g}; reported as fraction of the bound")


def check_variants(ctxs, m, seed) -> CheckReport:
    worst = 0.0
    for ctx in ctxs:
        x, y = random_pairs(ctx, m, seed)
        N = kernel_N(ctx, x, y)
        for other in (kernel_N_alpha(ctx, x, y), kernel_N_r(ctx, x, y), kernel_N_z(ctx, x, x - y)):
            worst = max(worst, _rel(N - other, N, 1e-12))
    return _report("variant_equivalence", worst, THRESHOLDS["exact"], m * len(ctxs))


def check_shift_identity(ctxs, m, seed) -> CheckReport:
    worst = 0.0
    for ctx in ctxs:
        x, y = random_pairs(ctx, m, seed)
        h = 1e-6 * ctx.mollifier.support_ball.radius
        lhs = kernel_dN(ctx, x, y) + _fd_y(lambda a, b: kernel_N(ctx, a, b), x, y, h)
        rhs = kernel_N_alpha(ctx, x, y, phi="grad")
        worst = max(worst, _rel(lhs - rhs, rhs))
    return _report("shift_identity", worst, THRESHOLDS["fd_identity"], m * len(ctxs))


def check_cutoff_identity(ctxs, m, seed) -> CheckReport:
    """d_x[N eta] = -d_y[N eta] + eta (x - y) int d_j psi alpha^(n-1), eta = eta(|x-y|/eps)."""
    worst = 0.0
    for ctx in ctxs:
        x, y = random_pairs(ctx, m, seed)
        dist = np.linalg.norm(x - y, axis=-1)
        t = 0.8 + 1.6 * qmc.Halton(d=1, scramble=True, seed=seed).random(len(x))[:, 0]
        eps = dist / t
        h = 1e-6 * ctx.mollifier.support_ball.radius

        def Neta(a, b):
            d = np.linalg.norm(a - b, axis=-1)
            return kernel_N(ctx, a, b) * eta_eval(d / eps)[:, None]

        N = kernel_N(ctx, x, y)
        et, ed = eta_eval(t), eta_deriv(t)
        grad_eta = (ed / (dist * eps))[:, None] * (x - y)
        lhs = kernel_dN(ctx, x, y) * et[:, None, None] + N[:, :, None] * grad_eta[:, None, :]
        rhs = -_fd_y(Neta, x, y, h) + et[:, None, None] * kernel_N_alpha(ctx, x, y, phi="grad")
        worst = max(worst, _rel(lhs - rhs, np.abs(lhs) + np.abs(rhs)))
    return _report("cutoff_shift_identity", worst, THRESHOLDS["fd_identity"], m * len(ctxs))


def check_homogeneity(ctxs, m, seed) -> CheckReport:
    worst = 0.0
    for ctx in ctxs:
        x, y = random_pairs(ctx, m, seed)
        z = x - y
        k1 = kernel_k(ctx, x, z)
        for t in (0.1, 7.0):
            worst = max(worst, float(np.max(np.abs(kernel_k(ctx, x, t * z) - k1)) / np.max(np.abs(k1))))
    return _report("k_homogeneity", worst, THRESHOLDS["exact"], m * len(ctxs))


def check_k_bounded(ctxs, m, seed) -> CheckReport:
    ratio = 0.0
    for ctx in ctxs:
        x, y = random_pairs(ctx, m, seed)
        k = kernel_k(ctx, x, x - y)
        d, n = ctx.domain.diameter, ctx.dim
        bound = ctx.mollifier.max_value * d**n + ctx.mollifier.max_grad * d ** (n + 1)
        ratio = max(ratio, float(np.max(np.abs(k))) / bound)
    return _report("k_bounded", ratio, 1.0, m * len(ctxs), "max |k| as a fraction of the bound")


def check_sphere_mean(ctxs, probes_per_ctx) -> CheckReport:
    worst, count = 0.0, 0
    for ctx in ctxs:
        for p in interior_probes(ctx.domain, probes_per_ctx, frac=0.7):
            worst = max(worst, float(np.max(np.abs(sphere_mean_k(ctx, p)))))
            count += 1
    return _report("k_sphere_mean", worst, THRESHOLDS["quadrature"], count)


def check_ibp_volume(ctxs) -> CheckReport:
    worst = 0.0
    for ctx in ctxs:
        for p in interior_probes(ctx.domain, 3):
            worst = max(worst, float(np.max(np.abs(ibp_volume_integral(ctx, p)))))
    return _report("ibp_volume_identity", worst, THRESHOLDS["quadrature"], 3 * len(ctxs))


def check_split(ctxs, m, seed) -> CheckReport:
    """K + G against the unexpanded closed form of dN."""
    worst = 0.0
    for ctx in ctxs:
        x, y = random_pairs(ctx, m, seed)
        closed = kernel_dN_closed(ctx, x, y)
        worst = max(worst, _rel(kernel_dN(ctx, x, y) - closed, closed, 1e-12))
    return _report("dN_split_consistency", worst, THRESHOLDS["exact"], m * len(ctxs))


def scale_pairs(ctx, m, seed, rmin=1e-4):
    """Pairs in the domain with |x - y| log-uniform in [rmin, diam]."""
    rng = np.random.default_rng(seed)
    diam = ctx.domain.diameter
    xs, ys = [], []
    have = 0
    while have < m:
        x = sample_in(ctx.domain, 2 * m, seed=seed + have + 1)
        g = rng.standard_normal(x.shape)
        u = g / np.linalg.norm(g, axis=-1, keepdims=True)
        r = np.exp(rng.uniform(np.log(rmin), np.log(diam), size=len(x)))
        y = x + r[:, None] * u
        ok = ctx.domain.contains(y)
        xs.append(x[ok])
        ys.append(y[ok])
        have += int(ok.sum())
    return np.vstack(xs)[:m], np.vstack(ys)[:m]


def decade_maxima(values, dist, rmin, rmax):
    edges = np.log10(rmin) + np.arange(int(np.ceil(np.log10(rmax / rmin))) + 1)
    lr = np.log10(dist)
    out = []
    for a, b in zip(edges[:-1], edges[1:]):
        sel = (lr >= a) & (lr < b)
        out.append(float(values[sel].max()) if np.any(sel) else np.nan)
    return np.array(out)


def _blowup_ratio(maxima) -> float:
    """Largest ratio of a decade maximum to the maximum over all coarser decades.

    Decades where the kernel vanishes (rays missing supp psi) give no reference.
    """
    m = maxima[~np.isnan(maxima)]
    if len(m) < 2:
        return 0.0
    ref = np.maximum.accumulate(m[::-1])[::-1][1:]  # max over coarser decades
    ok = ref > 0
    return float(np.max(m[:-1][ok] / ref[ok])) if np.any(ok) else 0.0


def check_decay(ctxs, m, seed):
    g_ratio, d_ratio, gconst, mconst = 0.0, 0.0, 0.0, 0.0
    for ctx in ctxs:
        x, y = scale_pairs(ctx, max(m, 400), seed)
        dist = np.linalg.norm(x - y, axis=-1)
        n = ctx.dim
        G = np.abs(kernel_G(ctx, x, y)).reshape(len(x), -1).max(axis=1) * dist ** (n - 1)
        dN = np.abs(kernel_dN(ctx, x, y)).reshape(len(x), -1).max(axis=1) * dist**n
        diam = ctx.domain.diameter
        g_ratio = max(g_ratio, _blowup_ratio(decade_maxima(G, dist, 1e-4, diam)))
        d_ratio = max(d_ratio, _blowup_ratio(decade_maxima(dN, dist, 1e-4, diam)))
        gconst, mconst = max(gconst, float(G.max())), max(mconst, float(dN.max()))
    thr = THRESHOLDS["decade_ratio"]
    return [
        _report("G_weak_singularity", g_ratio, thr, m, f"g_constant {gconst:.6g}; decade-max ratio"),
        _report("dN_bound", d_ratio, thr, m, f"thm9_M {mconst:.6g}; decade-max ratio"),
    ]


# ------------------------------------------------------------------ solver checks


def _fd_grad(v, x, h):
    return np.stack([(v.v_eval(x + h * e) - v.v_eval(x - h * e)) / (2 * h) for e in np.eye(len(x))], axis=-1)


def check_outside(v, domain, m, seed) -> CheckReport:
    pts = exterior_points(domain, m, seed)
    worst = max(float(np.max(np.abs(v.v_eval(p, short_circuit=False)))) for p in pts)
    return _report("outside_vanishing", worst, THRESHOLDS["outside"], m, "full integral, no short-circuit")


def check_divergence(v, F, probes) -> CheckReport:
    div = np.array([v.div_v(p) for p in probes])
    f = F(probes)
    scale = float(np.max(np.abs(f)))
    err = float(np.max(np.abs(div - f)))
    return _report("divergence_residual", err / scale if err > 0 else 0.0, THRESHOLDS["mixed"], len(probes),
                   "trace(grad v) against F, relative to max|F| over the probes")


def check_grad_fd(v, probes, h) -> CheckReport:
    G = np.array([v.grad_v(p) for p in probes])
    FD = np.array([_fd_grad(v, p, h) for p in probes])
    err = float(np.max(np.abs(G - FD)))
    scale = float(np.max(np.abs(G)))
    return _report("grad_fd_consistency", err / scale if err > 0 else 0.0, THRESHOLDS["mixed"], len(probes),
                   f"central differences of v, step {h:.3g}")


def check_boundary(v, domain, probes, m) -> CheckReport:
    b, d = boundary_lines(domain, m)
    diam = domain.diameter
    ts = diam * np.array([1e-2, 1e-3, 1e-4])
    vals = np.array([[np.max(np.abs(v.v_eval(p + t * u))) for t in ts] for p, u in zip(b, d)])
    sup = max(float(np.max(np.abs(v.v_eval(p)))) for p in probes)
    sup = max(sup, float(vals.max()))
    measured = float(vals[:, -1].max()) / sup if sup > 0 else 0.0
    decreasing = bool(np.all(vals[:, 2] <= vals[:, 0] + 1e-300))
    return _report("boundary_continuity", measured, THRESHOLDS["mixed"], m,
                   f"|v| at distance {ts[-1]:.3g} from the boundary relative to sup|v|; "
                   f"decreasing along lines: {decreasing}", passed=measured <= THRESHOLDS["mixed"] and decreasing)


def convergence_study(v, schedule: EpsilonSchedule | Sequence[float], probes, F: ScalarField | None = None,
                      mean: float = 0.0) -> ConvergenceTable:
    """|div v^eps(x) - F(x) + psi(x) mean| per epsilon and probe."""
    schedule = schedule if isinstance(schedule, EpsilonSchedule) else EpsilonSchedule(tuple(schedule))
    F = F or v.field
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    eps = schedule.values
    res = np.full((len(eps), len(probes)), np.nan)
    notes = []
    for j, p in enumerate(probes):
        target = float(F(p)) - v.psi_at(p) * mean
        try:
            col = [abs(v.div_v_eps(p, e) - target) for e in eps]
        except ValueError as exc:
            notes.append(f"probe {j} skipped: {exc}")
            continue
        res[:, j] = col
    table = ConvergenceTable(tuple(eps), probes, res, True, tuple(notes))
    mx = table.max_residuals()
    mono = bool(np.all((mx[1:] < mx[:-1]) | (mx[1:] <= 1e-12)))
    return ConvergenceTable(tuple(eps), probes, res, mono, tuple(notes))


def check_convergence(v, problem, probes) -> CheckReport:
    mean = 0.0 if problem.is_union else integrate_field(problem.F, problem.domain, problem.quad)
    table = convergence_study(v, problem.epsilon_schedule, probes, problem.F, mean)
    mx = table.max_residuals()
    final = float(mx[-1])
    ok = table.monotone_flag and final <= THRESHOLDS["mixed"]
    note = f"monotone: {table.monotone_flag}; maxima {[float(f'{r:.3g}') for r in mx]}"
    if table.notes:
        note += "; " + "; ".join(table.notes)
    return _report("epsilon_convergence", final, THRESHOLDS["mixed"], len(probes) * len(mx), note, passed=ok)


# ------------------------------------------------------------------ suite


def check_suite(problem, level: str = "quick") -> list:
    """All checks for ``problem`` (a ProblemSpec), sorted by name."""
    if level not in LEVELS:
        raise ValueError(f"level must be one of {sorted(LEVELS)}")
    cfg = LEVELS[level]
    seed, m = problem.seed, cfg["pairs"]
    ctxs = _contexts(problem)
    reports = [
        check_support(ctxs, min(m, 1000), seed),
        check_kernel_bound(ctxs, m, seed),
        check_variants(ctxs, min(m, 1000), seed),
        check_shift_identity(ctxs, min(m, 1000), seed),
        check_cutoff_identity(ctxs, min(m, 1000), seed),
        check_homogeneity(ctxs, m, seed),
        check_k_bounded(ctxs, m, seed),
        check_sphere_mean(ctxs, max(5, cfg["probes"])),
        check_ibp_volume(ctxs),
        check_split(ctxs, m, seed),
        *check_decay(ctxs, m, seed),
    ]
    gate_ok = True
    pieces = problem.domain.pieces if problem.is_union else (problem.domain,)
    balls = [p.center_ball for p in pieces] if problem.is_union else [problem.mollifier_ball]
    bad = [verify_star_shaped(p, b, 2000, seed) for p, b in zip(pieces, balls)]
    gate_ok = all(r.ok for r in bad)
    reports.append(_report("star_shape_gate", 0.0 if gate_ok else 1.0, 0.0, 2000 * len(pieces),
                           "" if gate_ok else f"witness {next(r.worst_pair for r in bad if not r.ok)}"))
    if gate_ok:
        try:
            v = problem.build(gate=False)
        except (ValueError, StarShapeError) as exc:
            reports.append(_report("solver_build", 1.0, 0.0, 0, str(exc)))
        else:
            probes = interior_probes(problem.domain, cfg["probes"])
            h = 1e-4 * problem.domain.diameter / 4
            reports += [
                check_outside(v, problem.domain, cfg["exterior"], seed),
                check_divergence(v, problem.F, probes) if _zero_mean(problem) else _shifted_divergence(v, problem, probes),
                check_grad_fd(v, probes, h),
                check_boundary(v, problem.domain, probes, cfg["lines"]),
                check_convergence(v, problem, probes),
            ]
    return sorted(reports, key=lambda r: r.name)


def _zero_mean(problem) -> bool:
    if problem.is_union:
        return True
    scale = max(1.0, integrate_field(ScalarField(lambda x: np.abs(problem.F(x))), problem.domain, problem.quad))
    return abs(integrate_field(problem.F, problem.domain, problem.quad)) <= 1e-6 * scale


def _shifted_divergence(v, problem, probes) -> CheckReport:
    """For nonzero-mean F the solution satisfies div v = F - psi int F."""
    mean = integrate_field(problem.F, problem.domain, problem.quad)
    target = ScalarField(lambda x: problem.F(x) - np.array([v.psi_at(p) for p in np.atleast_2d(x)]).reshape(
        np.shape(x)[:-1]) * mean)
    rep = check_divergence(v, target, probes)
    return CheckReport(rep.name, rep.passed, rep.measured, rep.threshold, rep.samples,
                       rep.notes + "; target F - psi int F (nonzero mean)")
