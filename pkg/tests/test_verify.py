import json

import numpy as np
import pytest

from bogovskii.geometry import Ball, StarDomain
from bogovskii.potential import ScalarField, solve
from bogovskii.problem import ProblemSpec
from bogovskii.verify import (
    THRESHOLDS,
    CheckReport,
    _blowup_ratio,
    check_suite,
    convergence_study,
    decade_maxima,
    exterior_points,
    interior_probes,
    lshape_union,
    manufactured_ball_expr,
)

BALL = {"dim": 2, "shape": {"kind": "ball", "center": [0, 0], "radius": 2},
        "center_ball": {"center": [0, 0], "radius": 1}}


def _spec(F):
    return ProblemSpec.from_dict({"domain": BALL, "F": F})


@pytest.fixture(scope="module")
def ball_reports():
    return {r.name: r for r in check_suite(_spec(manufactured_ball_expr(2.0)))}


@pytest.fixture(scope="module")
def mutated_reports():
    return {r.name: r for r in check_suite(_spec(manufactured_ball_expr(2.0)).with_mutation())}


def test_ball_problem_passes_every_check(ball_reports):
    failed = [n for n, r in ball_reports.items() if not r.passed]
    assert not failed, failed
    assert {"boundary_continuity", "divergence_residual", "epsilon_convergence", "grad_fd_consistency",
            "shift_identity", "k_sphere_mean", "star_shape_gate"} <= set(ball_reports)


def test_reports_sorted_and_serialisable(ball_reports):
    names = list(ball_reports)
    assert names == sorted(names)
    d = ball_reports["shift_identity"].to_dict()
    assert set(d) == {"name", "passed", "measured", "threshold", "samples", "notes"}
    json.dumps(d)


def test_mutation_is_detected(mutated_reports):
    assert not mutated_reports["k_sphere_mean"].passed
    assert not mutated_reports["shift_identity"].passed
    # mutation only touches K, so pure support checks still pass
    assert mutated_reports["kernel_support_outside"].passed


def test_zero_field_solver_checks_are_exact():
    reps = {r.name: r for r in check_suite(_spec("0"))}
    for name in ("outside_vanishing", "divergence_residual", "boundary_continuity"):
        assert reps[name].passed and reps[name].measured == 0.0


def test_star_shape_gate_blocks_solver():
    dom = {"dim": 2, "shape": {"kind": "radial", "center": [0, 0], "radius": "1+0.8*cos(8*theta)"},
           "center_ball": {"center": [0, 0], "radius": 0.15}}
    reps = {r.name: r for r in check_suite(ProblemSpec.from_dict({"domain": dom, "F": "x1"}))}
    assert not reps["star_shape_gate"].passed
    assert "divergence_residual" not in reps


def test_unknown_level():
    with pytest.raises(ValueError):
        check_suite(_spec("x1"), "medium")


def test_convergence_single_epsilon():
    F = ScalarField.from_expr(manufactured_ball_expr(2.0))
    v = solve(F, StarDomain.ball((0, 0), 2.0, Ball((0, 0), 1.0)))
    t = convergence_study(v, [0.05], [[0.3, 0.2]])
    assert t.residuals.shape == (1, 1) and t.monotone_flag and len(t.rows()) == 1


def test_convergence_skips_probe_near_boundary():
    v = solve(ScalarField.from_expr("x1"), StarDomain.ball((0, 0), 2.0, Ball((0, 0), 1.0)))
    t = convergence_study(v, [0.1, 0.05], [[0.2, 0.1], [1.95, 0.0]])
    assert np.all(np.isnan(t.residuals[:, 1])) and not np.any(np.isnan(t.residuals[:, 0]))
    assert len(t.notes) == 1 and "probe 1" in t.notes[0]
    assert t.max_residuals().shape == (2,)


def test_decade_maxima_and_ratio():
    dist = np.array([2e-4, 5e-4, 3e-3, 0.05, 0.5])
    vals = np.array([1.0, 2.0, 1.5, 1.0, 0.0])
    m = decade_maxima(vals, dist, 1e-4, 1.0)
    assert m.tolist() == [2.0, 1.5, 1.0, 0.0]
    # a zero coarse decade (kernel vanishing there) is not a blow-up
    assert _blowup_ratio(m) == pytest.approx(1.5)
    assert _blowup_ratio(np.array([0.0, 0.0])) == 0.0
    assert _blowup_ratio(np.array([np.nan, 1.0])) == 0.0


def test_probe_and_exterior_helpers():
    dom = lshape_union()
    p = interior_probes(dom, 4)
    assert p.shape == (4, 2) and np.all(dom.contains(p))
    e = exterior_points(dom, 30, seed=1)
    assert e.shape == (30, 2) and not np.any(dom.contains(e))


def test_report_threshold_semantics():
    r = CheckReport("x", True, 0.5, THRESHOLDS["mixed"], 3)
    assert r.to_dict()["threshold"] == 1e-2
