import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import family_problem, lp_norm, mu_direct
from rbmo_lab.errors import InvalidSpec, LengthMismatch, NoDoublingCubes, ZeroMass
from rbmo_lab.geometry import (
    Cube, DoublingParams, build_family, default_family, dyadic_sides, enumerate_cubes,
    k_coefficient, smallest_doubling_dilate,
)
from rbmo_lab.measure import AtomicMeasure
from rbmo_lab.rbmo import (
    DeviationProfile, average, direct_norms, feasibility_norm, jn_profile,
    lp_oscillation, oscillation, parse_tag, sublevel_interval, witness_violation,
)

FULL = Cube((0.5,), 1.0)


def test_average_examples(m1):
    x = m1.points[:, 0]
    assert average(m1, np.full(256, 3.25), FULL) == pytest.approx(3.25, rel=1e-15)
    assert average(m1, x, FULL) == pytest.approx(0.5, abs=1e-15)
    assert average(m1, x, Cube(m1.points[9], 1e-3)) == x[9]
    with pytest.raises(ZeroMass):
        average(m1, x, Cube((3.0,), 0.1))
    with pytest.raises(LengthMismatch):
        average(m1, x[:10], FULL)


def test_oscillation_examples(m1):
    x = m1.points[:, 0]
    # Oracle: sum |x_i - 1/2| / 256 over the grid equals 1/4 exactly.
    want = sum(abs((i + 0.5) / 256 - 0.5) for i in range(256)) / 256
    assert want == 0.25
    assert oscillation(m1, x, FULL, 0.5) == pytest.approx(want, abs=1e-15)
    assert oscillation(m1, np.ones(256), FULL, 1.0) == 0.0
    assert oscillation(m1, x, FULL, 0.5, rho=2) == oscillation(m1, x, FULL, 0.5)


def test_sublevel_interval_against_scan(m1):
    x = m1.points[:, 0]
    lo, hi = sublevel_interval(m1, x, FULL, 0.3)
    ts = np.linspace(0, 1, 100001)
    vals = np.array([np.mean(np.abs(x - t)) for t in ts])
    inside = ts[vals <= 0.3]
    assert lo == pytest.approx(inside.min(), abs=1e-3)
    assert hi == pytest.approx(inside.max(), abs=1e-3)
    assert lo == pytest.approx(0.2764, abs=1e-4) and hi == pytest.approx(0.7236, abs=1e-4)


def test_sublevel_edge_cases(m1):
    x = m1.points[:, 0]
    assert sublevel_interval(m1, x, FULL, 0.2) is None
    lo, hi = sublevel_interval(m1, x, FULL, 0.25)
    assert lo <= 0.5 <= hi and hi - lo < 1 / 256 + 1e-12


@settings(max_examples=80, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=20),
       st.lists(st.floats(0.1, 5), min_size=20, max_size=20),
       st.floats(0.5, 3), st.floats(0, 5))
def test_deviation_profile_properties(vals, weights, den, slack):
    v = np.array(vals)
    w = np.array(weights[:len(vals)])
    prof = DeviationProfile(v, w, den)
    phi = lambda t: float(np.sum(np.abs(v - t) * w) / den)
    med = prof.median()
    assert prof.minimum == pytest.approx(phi(med), rel=1e-9, abs=1e-12)
    ts = np.linspace(v.min() - 1, v.max() + 1, 201)
    assert all(phi(t) >= prof.minimum - 1e-9 for t in ts)
    bound = prof.minimum + slack
    lo, hi = prof.sublevel(bound)
    assert phi(lo) <= bound * (1 + 1e-9) + 1e-12 and phi(hi) <= bound * (1 + 1e-9) + 1e-12
    step = 1e-6 * (1 + abs(lo) + abs(hi))
    if slack > 1e-6:
        assert phi(lo - step) > bound - 1e-9 and phi(hi + step) > bound - 1e-9


def test_lp_oscillation(m1):
    x = m1.points[:, 0]
    assert lp_oscillation(m1, np.ones(256), FULL, 1.0, 2.0) == 0.0
    assert lp_oscillation(m1, x, FULL, 0.4, 1.0) == pytest.approx(oscillation(m1, x, FULL, 0.4))
    want = math.sqrt(sum(((i + 0.5) / 256 - 0.5) ** 2 for i in range(256)) / 256)
    assert lp_oscillation(m1, x, FULL, 0.5, 2.0, rho=2) == pytest.approx(want, rel=1e-13)
    ps = [1, 1.5, 2, 3, 6]
    vals = [lp_oscillation(m1, x, FULL, 0.3, p, rho=2) for p in ps]
    assert all(a <= b + 1e-15 for a, b in zip(vals, vals[1:]))


def test_parse_tag():
    assert parse_tag("E") == ("E", 1.0)
    assert parse_tag("A(2)") == ("A", 2.0)
    assert parse_tag("A", 3) == ("A", 3.0)
    with pytest.raises(InvalidSpec):
        parse_tag("A(1)")
    with pytest.raises(InvalidSpec):
        parse_tag("Z")


@pytest.fixture(scope="module")
def m1_family(m1):
    return enumerate_cubes(m1, [2.0 ** -j for j in range(7)], 16)


def test_constant_function_has_zero_norms(m1, m1_family):
    c = np.full(256, -2.5)
    est = feasibility_norm(m1, c, m1_family, "E")
    assert est.value == 0.0
    assert set(est.witness.values()) == {-2.5}
    assert feasibility_norm(m1, c, m1_family, "A(2)").value == 0.0
    assert [e.value for e in direct_norms(m1, c, m1_family)] == [0.0, 0.0, 0.0]


def test_single_cube_family_norm_is_median_minimum(m1):
    x = m1.points[:, 0] ** 2
    fam = build_family(m1, [Cube((0.5,), 0.5)])
    est = feasibility_norm(m1, x, fam, "E")
    inside = (m1.points[:, 0] >= 0.25) & (m1.points[:, 0] <= 0.75)
    vals = x[inside]
    want = min(np.mean(np.abs(vals - t)) for t in vals)
    # The lower bound is accepted with a 1e-10 relative slack.
    assert want <= est.value <= want * (1 + 1e-9)


def test_three_nested_cubes_match_lp(m1):
    x = m1.points[:, 0]
    cubes = [Cube((0.5,), 1.0), Cube((0.3,), 0.25), Cube((0.3,), 1 / 32)]
    fam = build_family(m1, cubes)
    est = feasibility_norm(m1, x, fam, "E")
    keep, mem, dens, pairs, ks = family_problem(
        m1.points, m1.masses, 1.0, [(c.center, c.side) for c in cubes])
    want, _ = lp_norm(x, m1.masses, mem, dens, pairs, ks)
    assert est.value == pytest.approx(want, abs=1e-6 * max(want, 1e-12) + 1e-12)


def _random_problem(rng):
    n = int(rng.integers(8, 40))
    pts = np.sort(rng.uniform(0, 1, n))[:, None]
    masses = rng.uniform(0.2, 2.0, n)
    m = AtomicMeasure(pts, masses, 1.0)
    cubes = []
    for _ in range(int(rng.integers(2, 6))):
        cubes.append(Cube(pts[int(rng.integers(n))], float(2.0 ** -rng.integers(0, 5))))
    f = np.round(rng.normal(size=n), 3)
    return m, cubes, f


@pytest.mark.parametrize("seed", range(12))
@pytest.mark.parametrize("tag", ["E", "A(2)", "A(1.5)"])
def test_feasibility_norm_matches_lp(seed, tag):
    m, cubes, f = _random_problem(np.random.default_rng(seed))
    fam = build_family(m, cubes)
    kind, rho = parse_tag(tag)
    keep, mem, dens, pairs, ks = family_problem(
        m.points, m.masses, 1.0, [(c.center, c.side) for c in fam.cubes], kind, rho,
        fam.params.beta)
    if not keep:
        with pytest.raises(NoDoublingCubes):
            feasibility_norm(m, f, fam, tag)
        return
    est = feasibility_norm(m, f, fam, tag)
    want, _ = lp_norm(f, m.masses, mem, dens, pairs, ks)
    assert est.value >= want - 1e-7 * max(1.0, want)
    assert est.value <= want * (1 + 2e-6) + 1e-9
    assert witness_violation(m, f, est) <= est.value * (1 + 1e-9) + 1e-15


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(-50, 50).filter(lambda c: abs(c) > 1e-3),
       st.floats(-100, 100))
def test_homogeneity_and_translation(seed, c, d):
    m, cubes, f = _random_problem(np.random.default_rng(seed))
    fam = build_family(m, cubes)
    base = feasibility_norm(m, f, fam, "A(2)")
    moved = feasibility_norm(m, c * f + d, fam, "A(2)")
    assert moved.value == pytest.approx(abs(c) * base.value, rel=1e-9, abs=1e-12)


def test_direct_norms_match_recomputation(m1):
    f = np.log(1.0 / np.abs(m1.points[:, 0] - 0.5 + 1e-3))
    fam = default_family(m1)
    b, c, d = direct_norms(m1, f, fam, rho=2.0)
    # Re-evaluate D from its definition with plain loops.
    pts, w = m1.points, m1.masses
    beta = fam.params.beta
    cubes = [(q.center, q.side) for q in fam.cubes]
    avg, dbl = {}, []
    for i, (cc, s) in enumerate(cubes):
        inside = [a for a in range(256) if abs(pts[a, 0] - cc[0]) <= s / 2 + 1e-12]
        mass = sum(w[a] for a in inside)
        avg[i] = sum(f[a] * w[a] for a in inside) / mass
        if mu_direct(pts, w, cc, 4 * s) < beta * mass:
            dbl.append((i, inside, mass))
    osc = max(sum(abs(f[a] - avg[i]) * w[a] for a in ins) / mass for i, ins, mass in dbl)
    pair = 0.0
    for i, _, _ in dbl:
        for j, _, _ in dbl:
            (ci, si), (cj, sj) = cubes[i], cubes[j]
            if i != j and ci[0] - si / 2 >= cj[0] - sj / 2 - 1e-12 and ci[0] + si / 2 <= cj[0] + sj / 2 + 1e-12:
                k = k_coefficient(m1, fam.cubes[i], fam.cubes[j])
                pair = max(pair, abs(avg[i] - avg[j]) / k)
    assert d.value == pytest.approx(max(osc, pair), rel=1e-12)
    assert math.isfinite(b.value) and math.isfinite(c.value)
    assert witness_violation(m1, f, d) == pytest.approx(d.value, rel=1e-12)


def test_b_norm_uses_doubling_dilate(two_scale):
    f = two_scale.points[:, 0] ** 2
    fam = enumerate_cubes(two_scale, dyadic_sides(two_scale, 6), 8)
    (b,) = direct_norms(two_scale, f, fam, rho=2.0, tags=("B",))
    # Reference: for each cube, osc around the average over its doubling dilate.
    worst = 0.0
    for q in fam.cubes:
        qt = smallest_doubling_dilate(two_scale, q, fam.params)
        t = average(two_scale, f, qt)
        worst = max(worst, oscillation(two_scale, f, q, t, rho=2.0))
    assert b.value >= worst * (1 - 1e-12)


def test_d_norm_needs_doubling_cubes():
    m = AtomicMeasure([[0.0], [1.0]], [1.0, 1000.0], 1.0)
    fam = build_family(m, [Cube((0.0,), 1.0)], DoublingParams(beta=5.0))
    assert not fam.doubling.any()
    with pytest.raises(NoDoublingCubes):
        direct_norms(m, [0.0, 1.0], fam, tags=("D",))
    with pytest.raises(NoDoublingCubes):
        feasibility_norm(m, [0.0, 1.0], fam, "E")


def test_single_doubling_cube_d_value(m1):
    x = m1.points[:, 0]
    fam = build_family(m1, [FULL])
    (d,) = direct_norms(m1, x, fam, tags=("D",))
    assert d.value == pytest.approx(oscillation(m1, x, FULL, average(m1, x, FULL)), rel=1e-15)


def test_norm_ordering_on_m1(m1):
    fam = default_family(m1)
    x = m1.points[:, 0]
    for f in (x, np.sin(7 * x), (x > 0.4).astype(float)):
        e = feasibility_norm(m1, f, fam, "E").value
        a = feasibility_norm(m1, f, fam, "A(2)").value
        d = direct_norms(m1, f, fam, tags=("D",))[0].value
        assert e <= d + 1e-9
        assert d <= 3 * e + 1e-9
        assert 0 < a <= e * (1 + 1e-6)


def test_jn_profile_examples(m1):
    x = m1.points[:, 0]
    lam = np.linspace(0.05, 0.5, 10)
    const = jn_profile(m1, np.ones(256), FULL, 1.0, lam)
    assert np.all(const.masses == 0)
    step = jn_profile(m1, (x > 0.5).astype(float), FULL, 0.0, [0.25, 0.5, 0.75, 1.0])
    assert list(step.masses) == [0.5, 0.5, 0.5, 0.0]
    f = np.log(1 / np.abs(x - 0.501))
    prof = jn_profile(m1, f, FULL, 2.0, lam)
    brute = [sum(w for v, w in zip(f, m1.masses) if abs(v - 2.0) > t) for t in lam]
    np.testing.assert_allclose(prof.masses, brute, rtol=1e-12)
    assert np.all(np.diff(prof.masses) <= 0)
    with pytest.raises(InvalidSpec):
        jn_profile(m1, f, FULL, 2.0, [0.5, 0.1])
