"""Acceptance criteria 1-11, each printing one PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` (the lines show without -s),
or as a script: ``python tests/test_acceptance.py``.
"""

import json
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from bogovskii import fieldlang as fl
from bogovskii.bump import Mollifier
from bogovskii.decomposition import build_partition, localize, solve_union, union_boundary_lines
from bogovskii.geometry import Ball, StarDomain
from bogovskii.kernel import KernelContext
from bogovskii.potential import DEFAULT_SCHEDULE, ScalarField, integrate_field, solve
from bogovskii.quadrature import QuadConfig
from bogovskii.verify import (
    check_decay,
    check_homogeneity,
    check_kernel_bound,
    check_shift_identity,
    check_cutoff_identity,
    check_sphere_mean,
    check_variants,
    convergence_study,
    exterior_points,
    interior_probes,
    lshape_field,
    lshape_union,
    manufactured_ball_expr,
)

DISK = StarDomain.ball((0, 0), 2.0, Ball((0, 0), 1.0))
CTX = KernelContext(Mollifier(DISK.center_ball), DISK, QuadConfig())
CTX_MUT = KernelContext(Mollifier(DISK.center_ball), DISK, QuadConfig(), drop_dpsi_in_K=True)
CATALOG = ("x1", manufactured_ball_expr(2.0), "sin(x1)*cos(2*x2) + x1*x2^2")
SEED = 0


@pytest.fixture
def say(capsys):
    def emit(k, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {k}: {detail}")
        return ok

    return emit


def test_criterion_01_outside_vanishing(say):
    t0 = time.perf_counter()
    pts = exterior_points(DISK, 200, seed=SEED)
    worst = 0.0
    for src in CATALOG:
        v = solve(ScalarField.from_expr(src), DISK)
        worst = max(worst, max(float(np.max(np.abs(v.v_eval(p, short_circuit=False)))) for p in pts))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-8 and dt < 60
    assert say(1, ok, f"max |v| at 200 exterior points x {len(CATALOG)} fields = {worst:.3g} ({dt:.1f} s)")


def test_criterion_02_kernel_bound(say):
    t0 = time.perf_counter()
    rep = check_kernel_bound([CTX], 10_000, SEED)
    dt = time.perf_counter() - t0
    # measured is the largest |N||x-y|^(n-1) as a fraction of (1 + diam)^n max psi
    ok = rep.passed and dt < 60
    assert say(2, ok, f"max ratio to the bound over 10^4 pairs = {rep.measured:.4g} ({dt:.1f} s)")


def test_criterion_03_variants(say):
    rep = check_variants([CTX], 1000, SEED)
    assert say(3, rep.measured <= 1e-8, f"max rel err of the three kernel forms = {rep.measured:.3g}")


def test_criterion_04_derivative_identities(say):
    a, b = check_shift_identity([CTX], 100, SEED), check_cutoff_identity([CTX], 100, SEED)
    ok = a.measured <= 1e-4 and b.measured <= 1e-4
    assert say(4, ok, f"shift identity rel err {a.measured:.3g}, cutoff identity rel err {b.measured:.3g}")


def test_criterion_05_cz_kernel(say):
    hom = check_homogeneity([CTX], 1000, SEED)
    mean = check_sphere_mean([CTX], 5)
    g, d = check_decay([CTX], 4000, SEED)
    ok = hom.measured <= 1e-8 and mean.samples == 5 and mean.measured <= 1e-6 and g.measured <= 2 and d.measured <= 2
    assert say(5, ok, f"homogeneity {hom.measured:.3g}; sphere mean {mean.measured:.3g} at {mean.samples} x; "
                      f"decade ratios G {g.measured:.3g}, dN {d.measured:.3g}")


def _eps_table(src, mean, probes):
    v = solve(ScalarField.from_expr(src), DISK)
    return convergence_study(v, DEFAULT_SCHEDULE, probes, mean=mean)


def test_criterion_06_divergence_limit(say):
    t0 = time.perf_counter()
    probes = interior_probes(DISK, 3)
    a = _eps_table("x1", 0.0, probes)
    # F = 1: div v^eps -> 1 - psi |Omega|
    b = _eps_table("1", 4 * np.pi, probes)
    dt = time.perf_counter() - t0
    fa, fb = a.max_residuals()[-1], b.max_residuals()[-1]
    ok = a.monotone_flag and b.monotone_flag and fa <= 1e-2 and fb <= 1e-2 and dt < 600
    assert say(6, ok, f"(a) monotone {a.monotone_flag}, final {fa:.3g}; (b) monotone {b.monotone_flag}, "
                      f"final {fb:.3g} ({dt:.1f} s)")


def test_criterion_07_derivative_representation(say):
    t0 = time.perf_counter()
    F = ScalarField.from_expr(manufactured_ball_expr(2.0))
    v = solve(F, DISK)
    ax = np.linspace(-1.2, 1.2, 5)
    grid = np.stack(np.meshgrid(ax, ax), -1).reshape(-1, 2)
    G = np.array([v.grad_v(p) for p in grid])
    f = F(grid)
    div_err = float(np.max(np.abs(np.trace(G, axis1=1, axis2=2) - f)) / np.max(np.abs(f)))
    h = 1e-4
    fd = np.array([np.stack([(v.v_eval(p + h * e) - v.v_eval(p - h * e)) / (2 * h) for e in np.eye(2)], -1)
                   for p in grid])
    fd_err = float(np.max(np.abs(G - fd)) / np.max(np.abs(G)))
    dt = time.perf_counter() - t0
    ok = div_err <= 1e-2 and fd_err <= 1e-2 and dt < 600
    assert say(7, ok, f"trace vs F rel err {div_err:.3g}; grad vs FD rel err {fd_err:.3g} on 5x5 ({dt:.1f} s)")


def test_criterion_08_scaling(say):
    big = StarDomain.ball((0, 0), 4.0, Ball((0, 0), 2.0))
    src = "x1*cos(x2) - x2^2*x1 + sin(x1 + x2)"
    direct = solve(ScalarField.from_expr(src), big)
    # unit-normalised problem built by hand: z = x/2, F_unit(z) = F(2z) on ball(0, 2) with the unit ball.
    # The node sets are scale covariant and 2 is exact in binary, so agreement is often bitwise;
    # test_potential covers a factor of 3.
    unit = solve(ScalarField(lambda z: ScalarField.from_expr(src)(2 * np.asarray(z))), DISK)
    rng = np.random.default_rng(SEED)
    r = 3.9 * np.sqrt(rng.uniform(size=50))
    th = rng.uniform(0, 2 * np.pi, 50)
    pts = np.stack([r * np.cos(th), r * np.sin(th)], -1)
    a = direct.v_many(pts)
    b = 2 * unit.v_many(pts / 2)
    err = float(np.max(np.abs(a - b)))
    assert say(8, err <= 1e-8, f"max |v - 2 w(x/2)| at 50 points = {err:.3g} (max |v| {np.max(np.abs(a)):.3g})")


def test_criterion_09_decomposition(say):
    u, F = lshape_union(), lshape_field()
    p = build_partition(u)
    fields = localize(F, u, p)
    ax = np.linspace(0.01, 1.99, 41)
    grid = np.stack(np.meshgrid(ax, ax), -1).reshape(-1, 2)
    grid = grid[u.contains(grid)]
    sum_err = float(np.max(np.abs(sum(f(grid) for f in fields) - F(grid))))
    cfg = QuadConfig(radial_panels=16, radial_grading=1.0).refined(2)
    means = [abs(integrate_field(f, piece, cfg)) for f, piece in zip(fields, u.pieces)]
    v = solve_union(F, u)
    ax = np.linspace(0.1, 1.9, 7)
    probes = np.stack(np.meshgrid(ax, ax), -1).reshape(-1, 2)
    probes = probes[u.contains(probes)]
    f = F(probes)
    div_err = float(np.max(np.abs(v.div_many(probes) - f)) / np.max(np.abs(f)))
    b, d = union_boundary_lines(u, 20)
    ts = u.diameter * np.array([1e-2, 1e-3, 1e-4])
    vals = np.array([[np.linalg.norm(v.v_eval(q + t * e)) for t in ts] for q, e in zip(b, d)])
    sup = max(float(np.max(np.linalg.norm(v.v_many(probes), axis=-1))), float(vals.max()))
    tail = float(vals[:, -1].max()) / sup
    decreasing = bool(np.all(np.diff(vals, axis=1) <= 1e-15))
    ok = sum_err <= 1e-10 and max(means) <= 1e-6 and div_err <= 1e-2 and tail <= 1e-2 and decreasing
    assert say(9, ok, f"sum F_i err {sum_err:.3g}; max |int F_i| {max(means):.3g}; div rel err {div_err:.3g} "
                      f"at {len(probes)} points; |v| at 1e-4 diam / sup|v| = {tail:.3g} over 20 lines, "
                      f"decreasing {decreasing}")


def test_criterion_10_mutation_sensitivity(say):
    mean = check_sphere_mean([CTX_MUT], 5)
    a, b = check_shift_identity([CTX_MUT], 100, SEED), check_cutoff_identity([CTX_MUT], 100, SEED)
    c5_fails = mean.measured > 1e-6
    c4_fails = a.measured > 1e-4 or b.measured > 1e-4
    assert say(10, c5_fails and c4_fails, f"mutated kernel: sphere mean {mean.measured:.3g} (5(iii) fails: "
                                         f"{c5_fails}); shift identity {a.measured:.3g}, cutoff identity {b.measured:.3g} "
                                         f"(4 fails: {c4_fails})")


def test_criterion_11_fieldlang_golden(say):
    golden = json.loads((Path(__file__).parent / "data" / "fieldlang_golden.json").read_text())
    bad = []
    for case in golden["cases"]:
        try:
            tree = fl.dump(fl.parse(case["src"]))
        except fl.FieldSyntaxError as exc:
            got = (exc.message.startswith(case.get("error", "\0")), exc.line, exc.column)
            if got != (True, case.get("line"), case.get("column")):
                bad.append(case["src"])
        else:
            if tree != case.get("tree"):
                bad.append(case["src"])
    ok = len(golden["cases"]) == 50 and not bad
    assert say(11, ok, f"{len(golden['cases']) - len(bad)}/{len(golden['cases'])} golden cases exact"
                       + (f"; mismatches {bad}" if bad else ""))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
