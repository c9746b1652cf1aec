"""Theorem-level checks for the T1 criterion on regular BMO.

For a cube ``Q`` and a constant ``f_2Q`` attached to ``2Q`` the function is
split as ``f = f_2Q + f2 + f3`` with ``f2 = (f - f_2Q)`` on ``2Q`` and
``f3 = (f - f_2Q)`` off ``2Q``. With ``b3(Q)`` the ``Q``-average of
``T f3`` the candidate constants for ``g = T f`` on doubling cubes are

    g_Q = f_2Q * <T1>_Q + b3(Q).

Everything is evaluated for truncated operators ``T_eps`` on a finite cube
family; constants are empirical maxima, never certified bounds.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .czo import Kernel, TruncatedOperator
from .errors import NoDoublingCubes, ZeroMass, ZeroNorm
from .geometry import Cube, CubeFamily, dilate, with_dilates
from .measure import AtomicMeasure
from .rbmo import NormEstimate, _members, as_values, feasibility_norm


def thread_count() -> int:
    raw = os.environ.get("RBMO_LAB_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)


def _map(fn, items):
    items = list(items)
    workers = min(thread_count(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(fn, items))


def default_eps_grid(measure: AtomicMeasure, points: int = 8) -> list[float]:
    """Geometric grid from the smallest atom gap to the diameter."""
    lo, hi = measure.min_gap(), measure.diameter()
    if points == 1 or not hi > lo:
        return [hi]
    return [float(x) for x in np.geomspace(lo, hi, points)]


# -- decomposition ----------------------------------------------------------


@dataclass
class DecompositionParts:
    f1_constant: float
    f2: np.ndarray
    f3: np.ndarray
    cube: Cube

    def reconstruct(self) -> np.ndarray:
        return self.f1_constant + self.f2 + self.f3


def decompose(measure: AtomicMeasure, f, q: Cube, f2q: float) -> DecompositionParts:
    v = as_values(measure, f)
    two = dilate(q, 2.0)
    inside = measure.cube_mask(two.center, two.side)
    diff = v - f2q
    f2 = np.where(inside, diff, 0.0)
    f3 = np.where(inside, 0.0, diff)
    return DecompositionParts(float(f2q), f2, f3, q)


def b_constants(kernel: Kernel, measure: AtomicMeasure, f, q: Cube, parts: DecompositionParts,
                eps: float, operator: TruncatedOperator | None = None) -> tuple[float, float]:
    """``(b2, b3)``: ``b2 = 0`` and ``b3`` is the ``Q``-average of ``T_eps f3``."""
    mask = measure.cube_mask(q.center, q.side)
    w = measure.masses[mask]
    if w.sum() <= 0:
        raise ZeroMass(f"{q} carries no mass")
    op = operator if operator is not None else TruncatedOperator(kernel, measure, eps)
    tf3 = op.apply(parts.f3, rows=np.flatnonzero(mask))
    return 0.0, float((tf3 * w).sum() / w.sum())


# -- shared per-(function, eps) state ---------------------------------------


class _Context:
    """Operator, T1 and the A(2) constants ``f_2Q`` for one family."""

    def __init__(self, kernel, measure, family, eps, operator=None):
        self.kernel, self.measure, self.family, self.eps = kernel, measure, family, eps
        self.op = operator if operator is not None else TruncatedOperator(kernel, measure, eps)
        self.t1 = self.op.apply(np.ones(measure.n_atoms))
        self.t1_avg = np.array([self._avg(self.t1, i) for i in range(len(family))])

    def _avg(self, values, i):
        atoms = _members(self.measure, self.family, i)
        w = self.measure.masses[atoms]
        return float((values[atoms] * w).sum() / w.sum())


def two_cube_constants(measure: AtomicMeasure, f, family: CubeFamily) -> tuple[np.ndarray, NormEstimate]:
    """``f_2Q`` for every family cube from one A(2) solve on the family
    extended by the 2-dilates of its cubes."""
    ext, where = with_dilates(measure, family, 2.0)
    est = feasibility_norm(measure, f, ext, "A", 2.0)
    return np.array([est.witness[int(j)] for j in where]), est


def _b3_table(ctx: _Context, v: np.ndarray, f2q: np.ndarray):
    """Per cube: b3(Q), and the Q-rows of T f2 and T f3."""
    meas, fam = ctx.measure, ctx.family
    b3 = np.empty(len(fam))
    i2 = np.empty(len(fam))
    i3 = np.empty(len(fam))
    for i, q in enumerate(fam.cubes):
        parts = decompose(meas, v, q, f2q[i])
        rows = _members(meas, fam, i)
        w = meas.masses[rows]
        block = ctx.op.matrix[rows]
        tf2 = block @ parts.f2
        tf3 = block @ parts.f3
        b3[i] = (tf3 * w).sum() / w.sum()
        i2[i] = (np.abs(tf2) * w).sum() / w.sum()
        i3[i] = (np.abs(tf3 - b3[i]) * w).sum() / w.sum()
    return b3, i2, i3


# -- lemma reports ----------------------------------------------------------


@dataclass
class LemmaReport:
    ratios: dict = field(default_factory=dict)
    headline: float = 0.0
    skipped: str | None = None

    def to_dict(self):
        return {"headline": self.headline, "skipped": self.skipped,
                "ratios": {str(k): v for k, v in self.ratios.items()}}


def lemma23_report(kernel: Kernel, measure: AtomicMeasure, f, family: CubeFamily, eps: float,
                   norm: NormEstimate, f2q: np.ndarray | None = None,
                   operator: TruncatedOperator | None = None) -> LemmaReport:
    """``(1/mu(Q)) int_Q |T f_k - b_k(Q)| / ||f||`` for ``k = 2, 3`` on doubling cubes.

    ``ratios`` maps cube index to ``(I2, I3)`` already divided by the norm.
    """
    if norm.value == 0:
        return LemmaReport(skipped="ZeroNorm")
    dbl = family.doubling_indices
    if len(dbl) == 0:
        raise NoDoublingCubes("the family has no doubling cube")
    v = as_values(measure, f)
    if f2q is None:
        f2q, _ = two_cube_constants(measure, v, family)
    ctx = _Context(kernel, measure, family, eps, operator)
    _, i2, i3 = _b3_table(ctx, v, f2q)
    ratios = {int(i): (float(i2[i] / norm.value), float(i3[i] / norm.value)) for i in dbl}
    head = max(max(r) for r in ratios.values())
    return LemmaReport(ratios, float(head))


def lemma23k_report(kernel: Kernel, measure: AtomicMeasure, f, family: CubeFamily, eps: float,
                    norm: NormEstimate, f2q: np.ndarray | None = None,
                    operator: TruncatedOperator | None = None) -> LemmaReport:
    """``|b_k(Q) - b_k(R)| / (||f|| K(Q, R))`` over nested pairs.

    ``ratios`` maps ``(Q, R)`` to ``(k=2 ratio, k=3 ratio)``; the first entry
    is 0 because ``b2`` vanishes identically.
    """
    if norm.value == 0:
        return LemmaReport(skipped="ZeroNorm")
    v = as_values(measure, f)
    if f2q is None:
        f2q, _ = two_cube_constants(measure, v, family)
    ctx = _Context(kernel, measure, family, eps, operator)
    b3, _, _ = _b3_table(ctx, v, f2q)
    b2 = np.zeros(len(family))
    ratios = {}
    for (a, b), k in zip(family.nested_pairs, family.pair_k):
        r2 = abs(b2[a] - b2[b]) / (norm.value * k)
        r3 = abs(b3[a] - b3[b]) / (norm.value * k)
        ratios[(int(a), int(b))] = (float(r2), float(r3))
    head = max((r[1] for r in ratios.values()), default=0.0)
    return LemmaReport(ratios, float(head))


# -- T1 hypotheses ----------------------------------------------------------


def _t1_row(ctx: _Context) -> dict:
    meas, fam = ctx.measure, ctx.family
    dbl = fam.doubling_indices
    h1 = 0.0
    for i in dbl:
        rows = _members(meas, fam, i)
        w = meas.masses[rows]
        osc = (np.abs(ctx.t1[rows] - ctx.t1_avg[i]) * w).sum() / w.sum()
        h1 = max(h1, fam.k_cap(meas, int(i)) * osc)
    h2 = 0.0
    pairs, pk = fam.doubling_pairs()
    for (a, b), k in zip(pairs, pk):
        h2 = max(h2, fam.k_cap(meas, int(a)) * abs(ctx.t1_avg[a] - ctx.t1_avg[b]) / k)
    return {"eps": ctx.eps, "h1": float(h1), "h2": float(h2),
            "sup_t1": float(np.max(np.abs(ctx.t1)))}


def t1_report(kernel: Kernel, measure: AtomicMeasure, family: CubeFamily, eps_grid) -> dict:
    """Empirical constants of the two T1 hypotheses with ``b_Q = <T1>_Q``.

    ``h1`` is the largest ``K(Q) * osc(T1, Q)`` over doubling cubes and
    ``h2`` the largest ``K(Q) |<T1>_Q - <T1>_R| / K(Q, R)`` over nested
    doubling pairs (0 when there is none).
    """
    if len(family.doubling_indices) == 0:
        raise NoDoublingCubes("the family has no doubling cube")
    rows = _map(lambda e: _t1_row(_Context(kernel, measure, family, float(e))), eps_grid)
    return {
        "per_eps": rows,
        "h1": max(r["h1"] for r in rows),
        "h2": max(r["h2"] for r in rows),
        "sup_t1": max(r["sup_t1"] for r in rows),
    }


# -- boundedness of T on the space ------------------------------------------


def fq_ratio(measure: AtomicMeasure, est: NormEstimate, cubes=None) -> float:
    """``max |f_Q| / K(Q)`` over the witness constants of an estimate."""
    fam = est.family
    idx = est.witness.keys() if cubes is None else cubes
    return max(abs(est.witness[int(i)]) / fam.k_cap(measure, int(i)) for i in idx)


@dataclass
class TheoremReport:
    h1: float
    h2: float
    sup_t1: float
    per_eps: list
    per_function: list
    headline: float
    provenance: dict

    def to_dict(self) -> dict:
        return {
            "h1": self.h1,
            "h2": self.h2,
            "sup_t1": self.sup_t1,
            "headline": self.headline,
            "per_eps": self.per_eps,
            "per_function": self.per_function,
            "provenance": self.provenance,
        }


def _function_eps_row(ctx: _Context, name, v, norm_f, f2q, fq):
    meas, fam = ctx.measure, ctx.family
    dbl = fam.doubling_indices
    b3, i2, i3 = _b3_table(ctx, v, f2q)
    g = ctx.op.apply(v)
    g_q = f2q * ctx.t1_avg + b3
    osc = 0.0
    for i in dbl:
        rows = _members(meas, fam, i)
        w = meas.masses[rows]
        osc = max(osc, float((np.abs(g[rows] - g_q[i]) * w).sum() / w.sum()))
    pairs, pk = fam.doubling_pairs()
    pair = 0.0
    if len(pairs):
        pair = float(np.max(np.abs(g_q[pairs[:, 0]] - g_q[pairs[:, 1]]) / pk))
    norm_g = feasibility_norm(meas, g, fam, "E").value
    k3 = 0.0
    if len(fam.nested_pairs):
        a, b = fam.nested_pairs[:, 0], fam.nested_pairs[:, 1]
        k3 = float(np.max(np.abs(b3[a] - b3[b]) / fam.pair_k)) / norm_f
    lemma23 = float(max(i2[dbl].max(), i3[dbl].max())) / norm_f
    return {
        "function": name,
        "eps": ctx.eps,
        "norm_f": norm_f,
        "norm_Tf": norm_g,
        "ratio": norm_g / norm_f,
        "osc_witness": osc / norm_f,
        "pair_witness": pair / norm_f,
        "lemma23": lemma23,
        "lemma23k": k3,
        "lemma23k_k2": 0.0,
        "fq_ratio": fq,
    }


def boundedness_report(kernel: Kernel, measure: AtomicMeasure, corpus, family: CubeFamily,
                       eps_grid, names=None) -> TheoremReport:
    """Run the witness construction for every function and every ``eps``.

    The headline is the largest ``||T_eps f||_E / ||f||_E``.
    """
    kernel.check(measure)
    if len(family.doubling_indices) == 0:
        raise NoDoublingCubes("the family has no doubling cube")
    funcs = [as_values(measure, f) for f in corpus]
    names = list(names) if names is not None else [f"f{i}" for i in range(len(funcs))]
    prepared = []
    for name, v in zip(names, funcs):
        norm_f = feasibility_norm(measure, v, family, "E").value
        if norm_f == 0:
            raise ZeroNorm(f"{name} has zero norm on the family (constant function)")
        f2q, a_est = two_cube_constants(measure, v, family)
        fq = fq_ratio(measure, a_est, range(len(family)))
        prepared.append((name, v, norm_f, f2q, fq))

    def per_eps(eps):
        ctx = _Context(kernel, measure, family, float(eps))
        rows = [_function_eps_row(ctx, *item) for item in prepared]
        return _t1_row(ctx), rows

    results = _map(per_eps, eps_grid)
    t1_rows = [r[0] for r in results]
    fn_rows = [row for _, rows in results for row in rows]
    fn_rows.sort(key=lambda r: (names.index(r["function"]), r["eps"]))
    provenance = {
        "package_version": __version__,
        "kernel": kernel.name,
        "measure_sha256": measure.digest(),
        "n_atoms": measure.n_atoms,
        "family": {"size": len(family), "side_grid": list(family.side_grid),
                   "center_stride": family.center_stride, "beta": family.params.beta},
        "eps_grid": [float(e) for e in eps_grid],
        "functions": names,
    }
    return TheoremReport(
        h1=max(r["h1"] for r in t1_rows),
        h2=max(r["h2"] for r in t1_rows),
        sup_t1=max(r["sup_t1"] for r in t1_rows),
        per_eps=t1_rows,
        per_function=fn_rows,
        headline=max(r["ratio"] for r in fn_rows),
        provenance=provenance,
    )


# -- test corpora -----------------------------------------------------------


def standard_corpus(measure: AtomicMeasure, seed: int = 0, size: int = 20) -> dict:
    """Affine, logarithmic, indicator and random smooth functions.

    Functions are built from the coordinates that vary over the support,
    rescaled to ``[0, 1]``; the list cycles through the four kinds until
    ``size`` is reached.
    """
    rng = np.random.default_rng(seed)
    pts = measure.points
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    live = hi > lo
    if not live.any():
        live[0] = True
    span = np.where(live, hi - lo, 1.0)
    u = ((pts - lo) / span)[:, live]
    out = {}
    k = 0
    while len(out) < size:
        kind = k % 4
        j = k // 4
        if kind == 0:
            a = rng.normal(size=u.shape[1])
            out[f"affine{j}"] = u @ a + rng.normal()
        elif kind == 1:
            c = rng.uniform(0.1, 0.9, size=u.shape[1]) + 1e-3
            r = np.max(np.abs(u - c), axis=1)
            out[f"log{j}"] = np.log(1.0 / (r + 1e-3 * (j + 1)))
        elif kind == 2:
            c = rng.uniform(0.2, 0.8)
            out[f"indicator{j}"] = (u[:, 0] <= c).astype(float)
        else:
            freqs = rng.integers(1, 6, size=3)
            amps = rng.normal(size=3)
            phases = rng.uniform(0, 2 * np.pi, size=3)
            out[f"smooth{j}"] = sum(a * np.sin(2 * np.pi * fr * u[:, 0] + ph)
                                    for a, fr, ph in zip(amps, freqs, phases))
        k += 1
    return out
