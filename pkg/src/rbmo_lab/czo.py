"""Calderon-Zygmund kernels and truncated singular integrals on atomic measures.

The truncated operator is

    T_eps f(x) = sum over atoms y outside the closed cube Q(x, eps) of
                 K(x, y) f(y) m(y),

so the atom at ``x`` never contributes. On an ``N``-atom measure this is an
``N x N`` matrix; :class:`TruncatedOperator` assembles it in row blocks.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionMismatch, UnknownKernel
from .measure import CUBE_TOL, AtomicMeasure
from .rbmo import as_values

BLOCK = 512


@dataclass(frozen=True)
class Kernel:
    """Off-diagonal kernel ``K(x, y)``.

    ``evaluator(x, y)`` broadcasts over leading axes; the last axis holds the
    coordinates.
    """

    name: str
    evaluator: Callable[[np.ndarray, np.ndarray], np.ndarray]
    n: float
    delta: float = 1.0
    antisymmetric: bool = False
    ambient_dim: int | None = None

    def __call__(self, x, y):
        return self.evaluator(np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64))

    def check(self, measure: AtomicMeasure) -> None:
        if self.ambient_dim is not None and measure.ambient_dim != self.ambient_dim:
            raise DimensionMismatch(f"{self.name} needs points in R^{self.ambient_dim}, "
                                    f"measure lives in R^{measure.ambient_dim}")
        if self.n != measure.dim_param:
            raise DimensionMismatch(f"{self.name} has n={self.n}, measure has n={measure.dim_param}")


def _cauchy_re(x, y):
    dx = x[..., 0] - y[..., 0]
    dy = x[..., 1] - y[..., 1]
    return dx / (dx * dx + dy * dy)


def _cauchy_im(x, y):
    dx = x[..., 0] - y[..., 0]
    dy = x[..., 1] - y[..., 1]
    return -dy / (dx * dx + dy * dy)


def _riesz(n):
    def ev(x, y):
        d = x - y
        r = np.sqrt(np.sum(d * d, axis=-1))
        return d[..., 0] / r ** (n + 1)
    return ev


def _zero(x, y):
    return np.zeros(np.broadcast_shapes(x.shape, y.shape)[:-1])


def builtin_kernel(name: str) -> Kernel:
    """``cauchy_re``, ``cauchy_im`` (real and imaginary parts of
    ``1/(x - y)`` in the complex plane), ``riesz(n)`` / ``riesz:n`` and
    ``zero``."""
    key = name.strip().lower()
    if key == "cauchy_re":
        return Kernel("cauchy_re", _cauchy_re, 1.0, 1.0, True, 2)
    if key == "cauchy_im":
        return Kernel("cauchy_im", _cauchy_im, 1.0, 1.0, True, 2)
    m = re.fullmatch(r"riesz(?:\(([^)]*)\)|:(.*))?", key)
    if m:
        arg = m.group(1) or m.group(2) or "1"
        try:
            n = float(arg)
        except ValueError:
            raise UnknownKernel(f"bad riesz exponent {arg!r}") from None
        if not n > 0:
            raise UnknownKernel("riesz exponent must be positive")
        return Kernel(f"riesz({n:g})", _riesz(n), n, 1.0, True, None)
    if key.startswith("zero"):
        arg = key[4:].strip("():")
        return Kernel("zero", _zero, float(arg) if arg else 1.0, 1.0, True, None)
    raise UnknownKernel(f"unknown kernel {name!r}")


def zero_kernel(n: float = 1.0) -> Kernel:
    return Kernel("zero", _zero, float(n), 1.0, True, None)


# -- truncated operator -----------------------------------------------------


def outside_mask(measure: AtomicMeasure, rows: np.ndarray, eps: float) -> np.ndarray:
    """``mask[r, j]``: atom ``j`` lies outside the closed cube Q(x_rows[r], eps)."""
    pts = measure.points
    d = np.max(np.abs(pts[rows][:, None, :] - pts[None, :, :]), axis=2)
    return d > 0.5 * eps + CUBE_TOL


def kernel_block(kernel: Kernel, measure: AtomicMeasure, rows: np.ndarray, eps: float) -> np.ndarray:
    """Truncated kernel values ``K(x_r, y_j)`` (zero inside the cube)."""
    pts = measure.points
    mask = outside_mask(measure, rows, eps)
    out = np.zeros(mask.shape)
    ri, cj = np.nonzero(mask)
    if len(ri):
        out[ri, cj] = kernel(pts[rows][ri], pts[cj])
    return out


class TruncatedOperator:
    """The matrix of ``f -> T_eps f`` with masses folded into the columns."""

    def __init__(self, kernel: Kernel, measure: AtomicMeasure, eps: float):
        if not eps > 0:
            raise ValueError("eps must be positive")
        kernel.check(measure)
        self.kernel = kernel
        self.measure = measure
        self.eps = float(eps)
        N = measure.n_atoms
        mat = np.empty((N, N))
        for lo in range(0, N, BLOCK):
            rows = np.arange(lo, min(N, lo + BLOCK))
            mat[rows] = kernel_block(kernel, measure, rows, eps) * measure.masses[None, :]
        self.matrix = mat

    def apply(self, f, rows=None) -> np.ndarray:
        v = as_values(self.measure, f)
        if rows is None:
            return self.matrix @ v
        return self.matrix[rows] @ v

    def opnorm(self, iterations: int = 500, tol: float = 0.0) -> float:
        return _power_iteration(self.matrix, self.measure.masses, iterations, tol)


def apply_truncated(kernel: Kernel, measure: AtomicMeasure, f, eps: float) -> np.ndarray:
    """``T_eps f`` at every atom, evaluated in row blocks without caching."""
    kernel.check(measure)
    v = as_values(measure, f) * measure.masses
    N = measure.n_atoms
    out = np.empty(N)
    for lo in range(0, N, BLOCK):
        rows = np.arange(lo, min(N, lo + BLOCK))
        out[rows] = kernel_block(kernel, measure, rows, eps) @ v
    return out


def t_one(kernel: Kernel, measure: AtomicMeasure, eps: float) -> np.ndarray:
    return apply_truncated(kernel, measure, np.ones(measure.n_atoms), eps)


def _power_iteration(matrix, masses, iterations, tol):
    # On L^2(mu) the operator f -> M f has adjoint g -> W^-1 M^T W g; in the
    # coordinates u = sqrt(m) f it is the plain matrix sqrt(m) M / sqrt(m).
    s = np.sqrt(masses)
    B = matrix * s[:, None] / s[None, :]
    x = np.ones(len(masses)) / math.sqrt(len(masses))
    lam = 0.0
    for _ in range(max(1, iterations)):
        y = B.T @ (B @ x)
        new = float(np.linalg.norm(y))
        if new == 0.0:
            return 0.0
        x = y / new
        if tol and abs(new - lam) <= tol * new:
            lam = new
            break
        lam = new
    # Rayleigh quotient of B^T B at the final iterate.
    bx = B @ x
    return math.sqrt(float(bx @ bx))


def l2_opnorm(kernel: Kernel, measure: AtomicMeasure, eps: float, iterations: int = 500) -> float:
    """Largest singular value of ``T_eps`` on ``L^2(mu)`` by power iteration."""
    return TruncatedOperator(kernel, measure, eps).opnorm(iterations)


# -- kernel axioms ----------------------------------------------------------

SAMPLE_BATCH = 4096


def _metric_dist(measure, a, b):
    d = measure.points[a] - measure.points[b]
    if measure.metric == "max":
        return np.max(np.abs(d), axis=-1)
    return np.sqrt(np.sum(d * d, axis=-1))


def _euclid_dist(measure, a, b):
    d = measure.points[a] - measure.points[b]
    return np.sqrt(np.sum(d * d, axis=-1))


def sample_pairs(measure: AtomicMeasure, count: int, rng: np.random.Generator):
    """First ``count`` pairs of distinct atoms drawn in fixed-size batches."""
    N = measure.n_atoms
    xs, ys, have = [], [], 0
    while have < count and N > 1:
        a = rng.integers(0, N, SAMPLE_BATCH)
        b = rng.integers(0, N, SAMPLE_BATCH)
        ok = a != b
        xs.append(a[ok]); ys.append(b[ok]); have += int(ok.sum())
    if not xs:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    return np.concatenate(xs)[:count], np.concatenate(ys)[:count]


def sample_triples(measure: AtomicMeasure, count: int, rng: np.random.Generator, max_batches: int = 2000):
    """First ``count`` triples with ``x1 != x2`` and ``2 d(x1, x2) <= d(x1, y)``."""
    N = measure.n_atoms
    out, have = [], 0
    for _ in range(max_batches):
        if have >= count or N < 3:
            break
        x1 = rng.integers(0, N, SAMPLE_BATCH)
        x2 = rng.integers(0, N, SAMPLE_BATCH)
        y = rng.integers(0, N, SAMPLE_BATCH)
        d12 = _metric_dist(measure, x1, x2)
        d1y = _metric_dist(measure, x1, y)
        ok = (x1 != x2) & (d12 > 0) & (2 * d12 <= d1y)
        out.append(np.stack([x1[ok], x2[ok], y[ok]], axis=1))
        have += int(ok.sum())
    if not out:
        return np.zeros((0, 3), dtype=np.int64)
    return np.concatenate(out)[:count]


def annulus_sum(kernel: Kernel, measure: AtomicMeasure, x: int, r: float, R: float, f=None) -> float:
    """``sum over y in Q(x, R) minus Q(x, r) of K(x, y) f(y) m(y)`` (f = 1 by default)."""
    d = measure.sup_distances(measure.points[x])
    sel = np.flatnonzero((d > 0.5 * r + CUBE_TOL) & (d <= 0.5 * R + CUBE_TOL))
    sel = sel[sel != x]
    if len(sel) == 0:
        return 0.0
    vals = kernel(measure.points[x][None, :], measure.points[sel])
    w = measure.masses[sel] if f is None else measure.masses[sel] * np.asarray(f)[sel]
    return float((vals * w).sum())


@dataclass
class KernelReport:
    size_C: float
    size_C_euclidean: float
    hoelder_C: float
    hoelder_C_euclidean: float
    cancellation_sup: float
    samples: dict

    def to_dict(self) -> dict:
        return {
            "size_C": self.size_C,
            "size_C_euclidean": self.size_C_euclidean,
            "hoelder_C": self.hoelder_C,
            "hoelder_C_euclidean": self.hoelder_C_euclidean,
            "cancellation_sup": self.cancellation_sup,
            "samples": self.samples,
        }


def kernel_condition_report(kernel: Kernel, measure: AtomicMeasure, sample_count: int,
                            rng_seed: int = 0, centers=None) -> KernelReport:
    """Empirical constants for the size, smoothness and cancellation conditions.

    Pairs, admissible triples and annuli are drawn independently from one
    seeded generator in fixed-size batches, so a larger ``sample_count``
    sees a superset of the samples of a smaller one. ``centers`` restricts
    the annulus centers to the given atom indices.
    """
    kernel.check(measure)
    rng = np.random.default_rng(rng_seed)
    n, delta = kernel.n, kernel.delta
    pts = measure.points
    rng_pairs, rng_triples, rng_annuli = rng.spawn(3)

    a, b = sample_pairs(measure, sample_count, rng_pairs)
    size = size_e = 0.0
    if len(a):
        kv = np.abs(kernel(pts[a], pts[b]))
        size = float(np.max(kv * _metric_dist(measure, a, b) ** n))
        size_e = float(np.max(kv * _euclid_dist(measure, a, b) ** n))

    tri = sample_triples(measure, sample_count, rng_triples)
    hold = hold_e = 0.0
    if len(tri):
        x1, x2, y = pts[tri[:, 0]], pts[tri[:, 1]], pts[tri[:, 2]]
        incr = np.abs(kernel(x1, y) - kernel(x2, y)) + np.abs(kernel(y, x1) - kernel(y, x2))
        d12 = _metric_dist(measure, tri[:, 0], tri[:, 1])
        d1y = _metric_dist(measure, tri[:, 0], tri[:, 2])
        hold = float(np.max(incr * d1y ** (n + delta) / d12 ** delta))
        e12 = _euclid_dist(measure, tri[:, 0], tri[:, 1])
        e1y = _euclid_dist(measure, tri[:, 0], tri[:, 2])
        hold_e = float(np.max(incr * e1y ** (n + delta) / e12 ** delta))

    pool = np.arange(measure.n_atoms) if centers is None else np.asarray(centers, dtype=np.int64)
    canc = 0.0
    for _ in range(sample_count):
        x = int(pool[rng_annuli.integers(0, len(pool))])
        d = measure.sup_distances(pts[x])
        r, R = sorted(2.0 * d[rng_annuli.integers(0, measure.n_atoms, 2)])
        if R <= r:
            continue
        canc = max(canc, abs(annulus_sum(kernel, measure, x, r, R)))

    return KernelReport(size, size_e, hold, hold_e, canc,
                        {"pairs": int(len(a)), "triples": int(len(tri)),
                         "annuli": int(sample_count), "seed": int(rng_seed)})
