"""Interval-bounded difference constraints.

Decides whether numbers ``x_0..x_{V-1}`` exist with

    lo[i] <= x[i] <= hi[i]              for every variable,
    |x[a] - x[b]| <= slack[p]           for every pair p = (a, b),

by shortest-path relaxation on the constraint graph. A virtual origin ``s``
carries the interval bounds as edges ``s -> i`` (weight ``hi[i]``) and
``i -> s`` (weight ``-lo[i]``); each pair contributes edges both ways with
weight ``slack[p] >= 0``. Cycles avoiding ``s`` are nonnegative, so the system
is infeasible exactly when some cycle through ``s`` is negative, i.e. when the
shortest distance to some ``i`` drops below ``lo[i]``.
"""
from __future__ import annotations

import numpy as np


class DifferenceSystem:
    """Pair constraints over ``n_vars`` variables, reusable across bounds."""

    def __init__(self, n_vars: int, pairs: np.ndarray, weights: np.ndarray):
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        weights = np.asarray(weights, dtype=np.float64).reshape(-1)
        if len(pairs) != len(weights):
            raise ValueError("one weight per pair")
        if np.any(weights < 0):
            raise ValueError("pair weights must be nonnegative")
        self.n_vars = int(n_vars)
        src = np.concatenate([pairs[:, 0], pairs[:, 1]])
        dst = np.concatenate([pairs[:, 1], pairs[:, 0]])
        w = np.concatenate([weights, weights])
        order = np.lexsort((src, dst))
        self._src = src[order]
        self._dst = dst[order]
        self._w = w[order]
        if len(self._dst):
            self._targets, self._starts = np.unique(self._dst, return_index=True)
        else:
            self._targets = self._starts = np.zeros(0, dtype=np.int64)

    def greatest_solution(self, hi: np.ndarray, scale: float = 1.0) -> np.ndarray:
        """Shortest distances from the origin using only upper-bound edges.

        This is the largest vector below ``hi`` satisfying every pair
        constraint (``scale`` multiplies all pair weights).
        """
        d = np.array(hi, dtype=np.float64)
        if len(self._src) == 0:
            return d
        w = self._w * scale
        # Nonnegative weights: converges in at most n_vars rounds.
        for _ in range(self.n_vars + 1):
            cand = np.minimum.reduceat(d[self._src] + w, self._starts)
            better = cand < d[self._targets]
            if not better.any():
                break
            d[self._targets[better]] = cand[better]
        return d

    def solve(self, lo: np.ndarray, hi: np.ndarray, scale: float = 1.0, tol: float = 0.0):
        """Return a feasible vector, or ``None`` on a negative cycle.

        The returned point is the midpoint of the least and the greatest
        feasible solutions; by convexity it is feasible as well.
        """
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        if np.any(lo > hi + tol):
            return None
        upper = self.greatest_solution(hi, scale)
        if np.any(upper < lo - tol):
            return None
        lower = -self.greatest_solution(-lo, scale)
        x = 0.5 * (upper + lower)
        return np.clip(x, np.minimum(lo, hi), np.maximum(lo, hi))
