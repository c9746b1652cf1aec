"""Finite atomic measures on R^m.

An :class:`AtomicMeasure` is a list of weighted points together with the
growth exponent ``n`` (the measure is meant to satisfy
``mu(Q) <= C * side(Q)**n``) and the metric used for point distances.
Cubes are always axis-parallel and closed, so cube membership is decided in
the max-coordinate norm whatever the declared metric is.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import EmptyFamily, InvalidSpec, ParseError

# Absolute slack for closed-cube membership.
CUBE_TOL = 1e-12

METRICS = ("max", "euclidean")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class AtomicMeasure:
    """Weighted point masses ``sum_i masses[i] * delta(points[i])``.

    Atoms keep the order they were given in; every sum over atoms runs in
    that order so results are reproducible bit for bit.
    """

    points: np.ndarray
    masses: np.ndarray
    dim_param: float
    metric: str = "max"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        ms = np.asarray(self.masses, dtype=np.float64).reshape(-1)
        if pts.ndim != 2 or pts.shape[0] == 0 or pts.shape[1] == 0:
            raise InvalidSpec("a measure needs at least one atom with one coordinate")
        if pts.shape[0] != ms.shape[0]:
            raise InvalidSpec(f"{pts.shape[0]} points but {ms.shape[0]} masses")
        if not np.all(np.isfinite(pts)) or not np.all(np.isfinite(ms)):
            raise InvalidSpec("coordinates and masses must be finite")
        if np.any(ms <= 0):
            raise InvalidSpec("atom masses must be positive")
        m = pts.shape[1]
        n = float(self.dim_param)
        if not (0 < n <= m):
            raise InvalidSpec(f"dimension parameter must lie in (0, {m}], got {n}")
        if self.metric not in METRICS:
            raise InvalidSpec(f"unknown metric {self.metric!r}")
        if np.unique(pts, axis=0).shape[0] != pts.shape[0]:
            raise InvalidSpec("atom points must be pairwise distinct")
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "masses", _frozen(ms))
        object.__setattr__(self, "dim_param", n)

    @property
    def ambient_dim(self) -> int:
        return self.points.shape[1]

    @property
    def n_atoms(self) -> int:
        return self.points.shape[0]

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    def __len__(self):
        return self.n_atoms

    # -- geometry ---------------------------------------------------------

    def sup_distances(self, center) -> np.ndarray:
        """Max-coordinate distance from ``center`` to every atom."""
        c = np.asarray(center, dtype=np.float64)
        return np.max(np.abs(self.points - c), axis=1)

    def distances(self, center) -> np.ndarray:
        """Distance in the declared metric from ``center`` to every atom."""
        if self.metric == "max":
            return self.sup_distances(center)
        c = np.asarray(center, dtype=np.float64)
        return np.sqrt(np.sum((self.points - c) ** 2, axis=1))

    def cube_mask(self, center, side: float) -> np.ndarray:
        """Boolean mask of the atoms in the closed cube of the given side."""
        return self.sup_distances(center) <= 0.5 * side + CUBE_TOL

    def extent(self) -> float:
        """Side of the smallest axis-parallel cube containing the support."""
        return float(np.max(self.points.max(axis=0) - self.points.min(axis=0)))

    def diameter(self) -> float:
        """Largest distance between two atoms in the declared metric."""
        if self.metric == "max":
            return self.extent()
        best = 0.0
        for lo in range(0, self.n_atoms, 512):
            block = self.points[lo:lo + 512]
            d2 = np.sum((block[:, None, :] - self.points[None, :, :]) ** 2, axis=2)
            best = max(best, float(d2.max()))
        return math.sqrt(best)

    def min_gap(self) -> float:
        """Smallest distance between two distinct atoms (inf for one atom)."""
        best = math.inf
        for lo in range(0, self.n_atoms, 512):
            block = self.points[lo:lo + 512]
            diff = block[:, None, :] - self.points[None, :, :]
            if self.metric == "max":
                d = np.max(np.abs(diff), axis=2)
            else:
                d = np.sqrt(np.sum(diff ** 2, axis=2))
            rows = np.arange(block.shape[0])
            d[rows, lo + rows] = np.inf
            best = min(best, float(d.min()))
        return best

    def nearest_atom(self, x) -> int:
        return int(np.argmin(self.sup_distances(x)))

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "ambient_dim": self.ambient_dim,
            "dim_param": self.dim_param,
            "metric": self.metric,
            "atoms": [[*map(float, p), float(w)] for p, w in zip(self.points, self.masses)],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AtomicMeasure":
        try:
            m = int(data["ambient_dim"])
            n = float(data["dim_param"])
            metric = data.get("metric", "max")
            atoms = np.asarray(data["atoms"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed measure document: {exc}") from exc
        if atoms.ndim != 2 or atoms.shape[1] != m + 1:
            raise ParseError(f"each atom must list {m} coordinates and a mass")
        return cls(atoms[:, :m], atoms[:, m], n, metric)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def mu_cube(measure: AtomicMeasure, cube) -> float:
    """Mass of the closed cube (boundary atoms included)."""
    mask = measure.cube_mask(cube.center, cube.side)
    return float(measure.masses[mask].sum())


def ndim_constant(measure: AtomicMeasure, family: Iterable) -> float:
    """Largest ``mu(Q) / side(Q)**n`` over a family of cubes.

    This is an empirical lower bound for the growth constant of the measure.
    """
    cubes = list(family)
    if not cubes:
        raise EmptyFamily("ndim_constant needs at least one cube")
    n = measure.dim_param
    return max(mu_cube(measure, q) / q.side ** n for q in cubes)


# -- canonical measures -----------------------------------------------------


@dataclass(frozen=True)
class UniformGrid:
    """``count`` equal atoms at the cell midpoints of ``[start, stop]``.

    Each atom carries the length of its cell. ``ambient_dim > 1`` embeds the
    grid on the first coordinate axis of R^m.
    """

    start: float = 0.0
    stop: float = 1.0
    count: int = 256
    ambient_dim: int = 1
    metric: str = "max"


@dataclass(frozen=True)
class CantorFourCorner:
    """Level ``depth`` of the planar four-corner Cantor set (ratio 1/4)."""

    depth: int = 3
    metric: str = "max"


@dataclass(frozen=True)
class TwoScale:
    """A light uniform grid plus a heavy cluster accumulating at a point.

    The cluster has one light atom at ``cluster_point`` and heavy atoms at
    ``cluster_point + cluster_scale * 2**-k`` with mass
    ``cluster_mass * 2**-k`` for ``k = 1..cluster_levels``. Distances and
    masses shrink at the same rate, so the measure stays one-dimensional.
    """

    count: int = 256
    start: float = 0.0
    stop: float = 1.0
    base_mass: float = 1.0
    cluster_point: float = 0.7
    cluster_scale: float = 0.25
    cluster_levels: int = 12
    cluster_mass: float = 4.0
    metric: str = "max"


@dataclass(frozen=True)
class Explicit:
    points: Sequence[Sequence[float]]
    masses: Sequence[float]
    dim_param: float
    metric: str = "max"


MeasureSpec = Union[UniformGrid, CantorFourCorner, TwoScale, Explicit]


def _grid_points(start, stop, count):
    if count < 1:
        raise InvalidSpec("atom count must be at least 1")
    if not stop > start:
        raise InvalidSpec("interval endpoints must be ordered")
    h = (stop - start) / count
    return start + (np.arange(count) + 0.5) * h, h


def cantor_centers(depth: int) -> np.ndarray:
    """Centers of the ``4**depth`` squares of the four-corner construction."""
    if depth < 0:
        raise InvalidSpec("depth must be nonnegative")
    corners = np.array([[0.0, 0.0], [0.75, 0.0], [0.0, 0.75], [0.75, 0.75]])
    origins = np.zeros((1, 2))
    side = 1.0
    for _ in range(depth):
        origins = (origins[:, None, :] + side * corners[None, :, :]).reshape(-1, 2)
        side /= 4.0
    return origins + 0.5 * side


def build_measure(spec: MeasureSpec) -> AtomicMeasure:
    if isinstance(spec, UniformGrid):
        xs, h = _grid_points(spec.start, spec.stop, spec.count)
        if spec.ambient_dim < 1:
            raise InvalidSpec("ambient dimension must be at least 1")
        pts = np.zeros((spec.count, spec.ambient_dim))
        pts[:, 0] = xs
        return AtomicMeasure(pts, np.full(spec.count, h), 1.0, spec.metric)
    if isinstance(spec, CantorFourCorner):
        pts = cantor_centers(spec.depth)
        return AtomicMeasure(pts, np.full(len(pts), 4.0 ** -spec.depth), 1.0, spec.metric)
    if isinstance(spec, TwoScale):
        xs, _ = _grid_points(spec.start, spec.stop, spec.count)
        if spec.base_mass <= 0 or spec.cluster_mass <= 0 or spec.cluster_scale <= 0:
            raise InvalidSpec("two-scale masses and scale must be positive")
        if spec.cluster_levels < 1:
            raise InvalidSpec("cluster needs at least one level")
        k = np.arange(1, spec.cluster_levels + 1)
        cluster = spec.cluster_point + spec.cluster_scale * 2.0 ** -k
        pts = np.concatenate([xs, [spec.cluster_point], cluster])
        ms = np.concatenate([
            np.full(spec.count, spec.base_mass / spec.count),
            [spec.base_mass / spec.count],
            spec.cluster_mass * 2.0 ** -k,
        ])
        return AtomicMeasure(pts[:, None], ms, 1.0, spec.metric)
    if isinstance(spec, Explicit):
        return AtomicMeasure(np.asarray(spec.points, dtype=float), spec.masses,
                             spec.dim_param, spec.metric)
    raise InvalidSpec(f"unsupported measure spec {spec!r}")


def load_measure(path) -> AtomicMeasure:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read measure {path}: {exc}") from exc
    return AtomicMeasure.from_dict(data)


def save_measure(measure: AtomicMeasure, path) -> None:
    Path(path).write_text(json.dumps(measure.to_dict()) + "\n", encoding="utf-8")
