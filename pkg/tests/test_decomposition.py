import numpy as np
import pytest

from bogovskii.decomposition import (
    CompatibilityError,
    build_partition,
    localize,
    log_smoothstep,
    solve_union,
    union_boundary_lines,
)
from bogovskii.geometry import Ball, StarDomain, UnionDomain, sample_in
from bogovskii.potential import ScalarField, integrate_field
from bogovskii.quadrature import QuadConfig
from bogovskii.verify import lshape_field, lshape_union

U = lshape_union()
F = lshape_field()
P = build_partition(U)
FIELDS = localize(F, U, P)
GRID = np.stack(np.meshgrid(np.linspace(0.01, 1.99, 41), np.linspace(0.01, 1.99, 41)), -1).reshape(-1, 2)
INSIDE = GRID[U.contains(GRID)]


def test_log_smoothstep():
    t = np.array([-1.0, 0.0, 0.5, 1.0, 2.0])
    s = np.exp(log_smoothstep(t))
    assert s.tolist()[:2] == [0.0, 0.0] and s.tolist()[3:] == [1.0, 1.0]
    assert s[2] == pytest.approx(0.5)
    x = np.linspace(0.001, 0.999, 999)
    assert np.all(np.diff(log_smoothstep(x)) >= 0)
    assert np.all(np.diff(log_smoothstep(x[100:900])) > 0)


def test_weights_sum_to_one():
    chis = P.chis(INSIDE)
    assert np.max(np.abs(chis.sum(axis=-1) - 1)) < 1e-12
    assert np.all(chis >= 0)
    assert np.all(P.chis(np.array([[1.5, 1.5], [-0.1, 0.5]])) == 0)


def test_pieces_sum_to_F():
    total = sum(f(INSIDE) for f in FIELDS)
    assert np.max(np.abs(total - F(INSIDE))) < 1e-10


def test_pieces_have_zero_mean():
    cfg = QuadConfig(radial_panels=16, radial_grading=1.0).refined(2)
    for f, piece in zip(FIELDS, U.pieces):
        assert abs(integrate_field(f, piece, cfg)) < 1e-6


def test_piece_support():
    for k, (f, piece) in enumerate(zip(FIELDS, U.pieces)):
        pts = sample_in(U, 4000, seed=k)
        outside = pts[~piece.contains(pts)]
        assert len(outside) > 100 and np.all(f(outside) == 0.0)


def test_compatibility_enforced():
    with pytest.raises(CompatibilityError, match="compatibility condition violated"):
        localize(ScalarField.constant(1.0), U, P)


def test_composite_divergence_and_boundary():
    v = solve_union(F, U)
    probes = np.array([[0.5, 0.5], [1.5, 0.5], [0.5, 1.5], [0.9, 0.2], [0.3, 1.1]])
    div = v.div_many(probes)
    assert np.max(np.abs(div - F(probes))) <= 1e-2 * np.max(np.abs(F(probes)))
    assert v.psi_at(probes[0]) == 0.0
    b, d = union_boundary_lines(U, 6)
    assert np.all(U.contains(b + 1e-3 * d)) and not np.any(U.contains(b - 1e-3 * d))
    near = [np.linalg.norm(v.v_eval(p + 1e-3 * u)) for p, u in zip(b, d)]
    far = [np.linalg.norm(v.v_eval(p + 1e-1 * u)) for p, u in zip(b, d)]
    assert max(near) < 1e-2 and all(a <= c + 1e-15 for a, c in zip(near, far))
    assert np.all(v.v_eval(np.array([1.5, 1.5])) == 0.0)


def test_partition_requires_chain():
    u = UnionDomain((StarDomain.box((0, 0), (2, 1)), StarDomain.box((0, 0), (1, 2))), (Ball((0.5, 0.5), 0.3),))
    p = build_partition(u, offset_factor=0.5)
    assert p.offsets == (0.3, 0.3)
