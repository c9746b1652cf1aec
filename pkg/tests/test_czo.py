import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import opnorm_dense, truncated_direct
from rbmo_lab.czo import (
    TruncatedOperator, annulus_sum, apply_truncated, builtin_kernel,
    kernel_condition_report, l2_opnorm, t_one, zero_kernel,
)
from rbmo_lab.errors import DimensionMismatch, UnknownKernel
from rbmo_lab.measure import AtomicMeasure, CantorFourCorner, UniformGrid, build_measure


def test_builtin_kernel_values():
    re_, im_ = builtin_kernel("cauchy_re"), builtin_kernel("cauchy_im")
    assert re_((1.0, 0.0), (0.0, 0.0)) == 1.0
    assert im_((0.0, 1.0), (0.0, 0.0)) == -1.0
    z = complex(0.3, -1.7) - complex(-0.4, 0.2)
    assert re_((0.3, -1.7), (-0.4, 0.2)) == pytest.approx((1 / z).real, rel=1e-15)
    assert im_((0.3, -1.7), (-0.4, 0.2)) == pytest.approx((1 / z).imag, rel=1e-15)
    assert builtin_kernel("riesz(2)").n == 2.0
    assert builtin_kernel("riesz:1").name == "riesz(1)"


def test_unknown_and_mismatched_kernels(m1):
    with pytest.raises(UnknownKernel):
        builtin_kernel("hilbert")
    with pytest.raises(UnknownKernel):
        builtin_kernel("riesz(x)")
    with pytest.raises(DimensionMismatch):
        apply_truncated(builtin_kernel("cauchy_re"), m1, np.ones(256), 0.1)
    with pytest.raises(DimensionMismatch):
        apply_truncated(builtin_kernel("riesz(2)"), m1, np.ones(256), 0.1)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=6, max_size=6))
def test_riesz_is_odd(c):
    k = builtin_kernel("riesz(2)")
    x, y = np.array(c[:3]), np.array(c[3:])
    if np.linalg.norm(x - y) > 1e-6:
        assert k(x, y) == -k(y, x)


def test_apply_truncated_matches_direct_sum(cantor3, rng):
    f = rng.normal(size=64)
    for name in ("cauchy_re", "cauchy_im"):
        k = builtin_kernel(name)
        for eps in (1e-3, 0.05, 0.3):
            got = apply_truncated(k, cantor3, f, eps)
            want = truncated_direct(k, cantor3.points, cantor3.masses, f, eps)
            np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)


def test_trivial_truncations(m1_plane):
    k = builtin_kernel("cauchy_re")
    assert np.all(apply_truncated(k, m1_plane, np.zeros(256), 0.01) == 0)
    assert np.all(t_one(k, m1_plane, 2 * m1_plane.diameter()) == 0)


def test_symmetric_grid_cancels_at_center():
    # Odd atom count puts an atom exactly at the center of the grid.
    m = build_measure(UniformGrid(0.0, 1.0, 257, ambient_dim=2))
    k = builtin_kernel("cauchy_re")
    center = 128
    assert m.points[center, 0] == 0.5
    v = t_one(k, m, 1 / 256)
    want = truncated_direct(k, m.points, m.masses, np.ones(257), 1 / 256)
    assert abs(v[center]) < 1e-9
    assert v[center] == pytest.approx(want[center], abs=1e-12)


def test_m1_center_atom_spec_example(m1_plane):
    # The 256-atom grid has no center atom; the two middle atoms see mirror
    # images of each other's sums.
    v = t_one(builtin_kernel("cauchy_re"), m1_plane, 1 / 256)
    assert v[127] == pytest.approx(-v[128], abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(-3, 3), st.floats(-3, 3))
def test_linearity(seed, a, b):
    m = build_measure(CantorFourCorner(2))
    r = np.random.default_rng(seed)
    f, g = r.normal(size=16), r.normal(size=16)
    k = builtin_kernel("cauchy_re")
    lhs = apply_truncated(k, m, a * f + b * g, 0.05)
    rhs = a * apply_truncated(k, m, f, 0.05) + b * apply_truncated(k, m, g, 0.05)
    scale = np.abs(lhs).max() + np.abs(rhs).max() + 1e-300
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * scale


def test_annulus_identity(cantor3, rng):
    k = builtin_kernel("cauchy_im")
    f = rng.normal(size=64)
    e1, e2 = 0.4, 0.02
    diff = apply_truncated(k, cantor3, f, e2) - apply_truncated(k, cantor3, f, e1)
    ann = np.array([annulus_sum(k, cantor3, x, e2, e1, f) for x in range(64)])
    np.testing.assert_allclose(diff, ann, rtol=0, atol=1e-12)


def test_antisymmetric_double_sum_vanishes(rng):
    pts = rng.uniform(0, 1, (80, 2))
    m = AtomicMeasure(pts, rng.uniform(0.1, 1, 80), 1.0)
    k = builtin_kernel("cauchy_re")
    t1 = t_one(k, m, 0.07)
    assert abs(float(t1 @ m.masses)) < 1e-12 * float(np.abs(t1).max())


def test_l2_trivial_cases(m1_plane):
    assert l2_opnorm(zero_kernel(), build_measure(UniformGrid(count=20)), 0.01) == 0.0
    one = AtomicMeasure([[0.0, 0.0]], [1.0], 1.0)
    assert l2_opnorm(builtin_kernel("cauchy_re"), one, 0.1) == 0.0


def test_l2_matches_dense_svd(m1_plane):
    m = build_measure(UniformGrid(count=96, ambient_dim=2))
    k = builtin_kernel("cauchy_re")
    for eps in (m.min_gap(), 0.1):
        want = opnorm_dense(k, m.points, m.masses, eps)
        assert l2_opnorm(k, m, eps) == pytest.approx(want, rel=1e-6)


def test_operator_matrix_shared_by_apply(cantor3, rng):
    k = builtin_kernel("cauchy_re")
    op = TruncatedOperator(k, cantor3, 0.01)
    f = rng.normal(size=64)
    np.testing.assert_allclose(op.apply(f), apply_truncated(k, cantor3, f, 0.01), rtol=1e-13, atol=1e-13)
    np.testing.assert_allclose(op.apply(f, rows=[3, 5]), op.apply(f)[[3, 5]], rtol=1e-14, atol=1e-15)


def _euclid_cantor(depth):
    m = build_measure(CantorFourCorner(depth))
    return AtomicMeasure(m.points, m.masses, 1.0, "euclidean")


def test_kernel_report_constants():
    m = _euclid_cantor(3)
    for name in ("cauchy_re", "cauchy_im"):
        rep = kernel_condition_report(builtin_kernel(name), m, 2000, rng_seed=4)
        assert rep.size_C <= 1 + 1e-9
        assert rep.hoelder_C <= 8
        assert rep.samples["triples"] == 2000


def test_hoelder_against_dense_triple_scan():
    m = _euclid_cantor(2)
    k = builtin_kernel("cauchy_re")
    pts = m.points
    best = 0.0
    for a, b, c in itertools.permutations(range(16), 3):
        d12 = np.linalg.norm(pts[a] - pts[b])
        d1y = np.linalg.norm(pts[a] - pts[c])
        if 2 * d12 <= d1y:
            inc = abs(k(pts[a], pts[c]) - k(pts[b], pts[c])) + abs(k(pts[c], pts[a]) - k(pts[c], pts[b]))
            best = max(best, inc * d1y ** 2 / d12)
    rep = kernel_condition_report(k, m, 3000, rng_seed=1)
    assert rep.hoelder_C <= best * (1 + 1e-12)
    assert best <= 8


def test_cancellation_on_symmetric_configuration():
    g = np.arange(-4, 5, dtype=float)
    pts = np.array([(x, y) for x in g for y in g])
    m = AtomicMeasure(pts, np.ones(len(pts)), 1.0, "euclidean")
    center = int(np.flatnonzero((pts == 0).all(axis=1))[0])
    for name in ("cauchy_re", "cauchy_im"):
        rep = kernel_condition_report(builtin_kernel(name), m, 300, rng_seed=0, centers=[center])
        assert rep.cancellation_sup <= 1e-12


def test_report_monotone_in_sample_count():
    m = _euclid_cantor(3)
    k = builtin_kernel("cauchy_re")
    reps = [kernel_condition_report(k, m, n, rng_seed=9) for n in (10, 100, 1000)]
    for field in ("size_C", "hoelder_C", "cancellation_sup"):
        vals = [getattr(r, field) for r in reps]
        assert vals == sorted(vals)
    again = kernel_condition_report(k, m, 100, rng_seed=9)
    assert again.to_dict() == reps[1].to_dict()
