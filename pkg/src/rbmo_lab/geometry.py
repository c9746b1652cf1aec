"""Cubes, layered-mass coefficients and doubling cubes.

For cubes ``Q`` inside ``R`` the coefficient

    K(Q, R) = 1 + sum_{j=1}^{N} mu(2^j Q) / side(2^j Q)**n,

with ``N`` the least integer such that ``2^N side(Q) >= side(R)``, plays the
role of ``log(side(R) / side(Q))`` for measures that are not doubling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyFamily, InvalidSpec, NotFound, NotNested, ParseError
from .measure import CUBE_TOL, AtomicMeasure, mu_cube

ALPHA = 4.0


@dataclass(frozen=True)
class Cube:
    """Closed axis-parallel cube ``Q(center, side)``."""

    center: tuple
    side: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))
        object.__setattr__(self, "side", float(self.side))
        if not self.side > 0:
            raise InvalidSpec(f"cube side must be positive, got {self.side}")

    def dilate(self, factor: float) -> "Cube":
        return dilate(self, factor)

    def contains(self, other: "Cube") -> bool:
        return contains(self, other)


def dilate(cube: Cube, factor: float) -> Cube:
    if not factor > 0:
        raise InvalidSpec("dilation factor must be positive")
    return Cube(cube.center, factor * cube.side)


def contains(outer: Cube, inner: Cube) -> bool:
    """``inner`` is a subset of ``outer`` (coordinatewise interval inclusion)."""
    c_out = np.asarray(outer.center)
    c_in = np.asarray(inner.center)
    gap = np.abs(c_out - c_in) + 0.5 * inner.side
    return bool(np.all(gap <= 0.5 * outer.side + CUBE_TOL))


def is_support_centered(measure: AtomicMeasure, cube: Cube) -> bool:
    return bool(np.any(np.all(measure.points == np.asarray(cube.center), axis=1)))


def dyadic_steps(small: float, large: float) -> int:
    """Least integer ``k >= 0`` with ``2**k * small >= large``.

    Multiplying by powers of two is exact, so exact ratios such as 16 give
    exactly 4.
    """
    if small >= large:
        return 0
    k = max(0, math.ceil(math.log2(large / small)))
    while k > 0 and math.ldexp(small, k - 1) >= large:
        k -= 1
    while math.ldexp(small, k) < large:
        k += 1
    return k


def layer_terms(measure: AtomicMeasure, q: Cube, count: int) -> np.ndarray:
    """``mu(2^j Q) / side(2^j Q)**n`` for ``j = 1..count``."""
    if count <= 0:
        return np.zeros(0)
    dist = measure.sup_distances(q.center)
    n = measure.dim_param
    out = np.empty(count)
    for j in range(1, count + 1):
        side = math.ldexp(q.side, j)
        out[j - 1] = measure.masses[dist <= 0.5 * side + CUBE_TOL].sum() / side ** n
    return out


def k_coefficient(measure: AtomicMeasure, q: Cube, r: Cube) -> float:
    if not contains(r, q):
        raise NotNested(f"{q} is not contained in {r}")
    steps = dyadic_steps(q.side, r.side)
    return 1.0 + float(layer_terms(measure, q, steps).sum())


def cap_steps(measure: AtomicMeasure, q: Cube) -> int:
    """Least positive ``k`` with ``mu(2^k Q)`` above half the total mass."""
    half = 0.5 * measure.total_mass
    dist = measure.sup_distances(q.center)
    k = 1
    while measure.masses[dist <= 0.5 * math.ldexp(q.side, k) + CUBE_TOL].sum() <= half:
        k += 1
    return k


def k_cap(measure: AtomicMeasure, q: Cube) -> float:
    """``K(Q) = K(Q, 2^k Q)`` for the first dilate holding over half the mass."""
    k = cap_steps(measure, q)
    return 1.0 + float(layer_terms(measure, q, k).sum())


@dataclass(frozen=True)
class DoublingParams:
    """Threshold for ``mu(alpha Q) < beta mu(Q)``; ``alpha`` is fixed to 4."""

    beta: float
    alpha: float = ALPHA

    @classmethod
    def for_measure(cls, measure: AtomicMeasure, beta: float | None = None) -> "DoublingParams":
        if beta is None:
            beta = default_beta(measure.ambient_dim)
        params = cls(float(beta))
        if not params.beta > params.alpha ** measure.dim_param:
            raise InvalidSpec(f"beta={params.beta} must exceed 4**n = {params.alpha ** measure.dim_param}")
        return params


def default_beta(ambient_dim: int) -> float:
    return 2.0 * 4.0 ** (ambient_dim + 1)


def _params(measure, params):
    return params if params is not None else DoublingParams.for_measure(measure)


def doubling_ratio(measure: AtomicMeasure, q: Cube, params: DoublingParams | None = None) -> float:
    params = _params(measure, params)
    inner = mu_cube(measure, q)
    outer = mu_cube(measure, dilate(q, params.alpha))
    return outer / inner if inner > 0 else math.inf


def is_doubling(measure: AtomicMeasure, q: Cube, params: DoublingParams | None = None) -> bool:
    params = _params(measure, params)
    inner = mu_cube(measure, q)
    return inner > 0 and mu_cube(measure, dilate(q, params.alpha)) < params.beta * inner


def smallest_doubling_dilate(measure: AtomicMeasure, q: Cube,
                             params: DoublingParams | None = None,
                             max_steps: int = 64) -> Cube:
    """First doubling cube in ``Q, 4Q, 16Q, ...``."""
    if max_steps < 1:
        raise InvalidSpec("max_steps must be at least 1")
    params = _params(measure, params)
    trace = []
    cube = q
    for _ in range(max_steps):
        if is_doubling(measure, cube, params):
            return cube
        trace.append(doubling_ratio(measure, cube, params))
        cube = dilate(cube, params.alpha)
    raise NotFound(f"no doubling dilate of {q} within {max_steps} steps", trace)


# -- finite cube families ---------------------------------------------------


@dataclass(eq=False)
class CubeFamily:
    """An explicit finite list of cubes standing in for "all cubes".

    ``center_index[i]`` is the atom at the center of cube ``i``; ``masses``,
    ``doubling`` and the nested pairs with their coefficients ``pair_k`` are
    filled in by :func:`enumerate_cubes`.
    """

    cubes: list
    center_index: np.ndarray
    masses: np.ndarray
    doubling: np.ndarray
    nested_pairs: np.ndarray  # shape (P, 2): (inner, outer)
    pair_k: np.ndarray
    params: DoublingParams
    side_grid: tuple = ()
    center_stride: int = 1
    _caps: dict = field(default_factory=dict, repr=False)

    def __len__(self):
        return len(self.cubes)

    @property
    def doubling_indices(self) -> np.ndarray:
        return np.flatnonzero(self.doubling)

    def doubling_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """Nested pairs with both cubes doubling, and their K(Q, R)."""
        if len(self.nested_pairs) == 0:
            return self.nested_pairs, self.pair_k
        keep = self.doubling[self.nested_pairs[:, 0]] & self.doubling[self.nested_pairs[:, 1]]
        return self.nested_pairs[keep], self.pair_k[keep]

    def k_cap(self, measure: AtomicMeasure, i: int) -> float:
        if i not in self._caps:
            self._caps[i] = k_cap(measure, self.cubes[i])
        return self._caps[i]

    def index_of(self, cube: Cube) -> int | None:
        for i, c in enumerate(self.cubes):
            if c.side == cube.side and c.center == cube.center:
                return i
        return None

    def to_dict(self) -> dict:
        return {
            "cubes": [[*c.center, c.side] for c in self.cubes],
            "doubling": [bool(b) for b in self.doubling],
            "nested_pairs": [[int(a), int(b)] for a, b in self.nested_pairs],
            "beta": self.params.beta,
            "side_grid": list(self.side_grid),
            "center_stride": self.center_stride,
        }

    @classmethod
    def from_dict(cls, measure: AtomicMeasure, data: dict) -> "CubeFamily":
        try:
            raw = [list(map(float, row)) for row in data["cubes"]]
            params = DoublingParams.for_measure(measure, data.get("beta"))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed cube family: {exc}") from exc
        cubes = [Cube(row[:-1], row[-1]) for row in raw]
        fam = build_family(measure, cubes, params)
        fam.side_grid = tuple(data.get("side_grid", ()))
        fam.center_stride = int(data.get("center_stride", 1))
        return fam


def nested_pairs_of(cubes: Sequence[Cube]) -> np.ndarray:
    """All ordered pairs ``(i, j)``, ``i != j``, with cube i inside cube j."""
    if not cubes:
        return np.zeros((0, 2), dtype=np.int64)
    centers = np.array([c.center for c in cubes])
    sides = np.array([c.side for c in cubes])
    gap = np.max(np.abs(centers[:, None, :] - centers[None, :, :]), axis=2)
    inside = gap + 0.5 * sides[:, None] <= 0.5 * sides[None, :] + CUBE_TOL
    inside &= sides[:, None] <= sides[None, :]
    np.fill_diagonal(inside, False)
    return np.argwhere(inside).astype(np.int64)


def build_family(measure: AtomicMeasure, cubes: Sequence[Cube],
                 params: DoublingParams | None = None) -> CubeFamily:
    """Populate masses, doubling flags, nested pairs and pair coefficients."""
    params = _params(measure, params)
    cubes = list(cubes)
    if not cubes:
        raise EmptyFamily("empty cube family")
    masses = np.array([mu_cube(measure, c) for c in cubes])
    if not np.any(masses > 0):
        raise EmptyFamily("no cube of the family carries positive mass")
    # Zero-mass cubes make every normalized quantity undefined; drop them.
    keep = masses > 0
    cubes = [c for c, k in zip(cubes, keep) if k]
    masses = masses[keep]
    outer = np.array([mu_cube(measure, dilate(c, params.alpha)) for c in cubes])
    doubling = outer < params.beta * masses
    centers = np.array([measure.nearest_atom(c.center) for c in cubes], dtype=np.int64)
    pairs = nested_pairs_of(cubes)
    pair_k = _pair_coefficients(measure, cubes, pairs)
    return CubeFamily(cubes, centers, masses, doubling, pairs, pair_k, params)


def _pair_coefficients(measure, cubes, pairs):
    out = np.empty(len(pairs))
    terms = {}
    for p, (i, j) in enumerate(pairs):
        steps = dyadic_steps(cubes[i].side, cubes[j].side)
        have = terms.get(i)
        if have is None or len(have) < steps:
            have = layer_terms(measure, cubes[i], steps)
            terms[i] = have
        out[p] = 1.0 + float(have[:steps].sum())
    return out


def enumerate_cubes(measure: AtomicMeasure, side_grid: Iterable[float], center_stride: int = 1,
                    params: DoublingParams | None = None) -> CubeFamily:
    """Cubes centered at every ``center_stride``-th atom, one per side length."""
    sides = [float(s) for s in side_grid]
    if not sides:
        raise InvalidSpec("side grid must be nonempty")
    if any(not s > 0 for s in sides):
        raise InvalidSpec("cube sides must be positive")
    if center_stride < 1:
        raise InvalidSpec("center stride must be at least 1")
    cubes = [Cube(measure.points[i], s)
             for i in range(0, measure.n_atoms, center_stride) for s in sides]
    fam = build_family(measure, cubes, params)
    fam.side_grid = tuple(sides)
    fam.center_stride = center_stride
    return fam


def dyadic_sides(measure: AtomicMeasure, levels: int | None = None) -> list[float]:
    """Sides ``L, L/2, L/4, ...`` down to roughly twice the smallest atom gap.

    ``L`` is the least power of two with ``L >= 2 * extent``, so the top cube
    around any atom covers the whole support.
    """
    top = 2.0 ** math.ceil(math.log2(max(2.0 * measure.extent(), 1e-300)))
    if levels is None:
        gap = measure.min_gap() if measure.n_atoms > 1 else top
        levels = max(1, int(math.floor(math.log2(top / (2 * gap)))) + 1)
    return [top * 2.0 ** -j for j in range(levels)]


def default_family(measure: AtomicMeasure, centers: int = 16, levels: int | None = None,
                   params: DoublingParams | None = None) -> CubeFamily:
    stride = max(1, measure.n_atoms // centers)
    return enumerate_cubes(measure, dyadic_sides(measure, levels), stride, params)


def with_dilates(measure: AtomicMeasure, family: CubeFamily, factor: float = 2.0
                 ) -> tuple[CubeFamily, np.ndarray]:
    """Extend a family by the ``factor``-dilates of its cubes.

    Returns the extended family (original cubes first, same order) and, for
    each original cube, the index of its dilate in the extended family.
    """
    cubes = list(family.cubes)
    lookup = {(c.center, c.side): i for i, c in enumerate(cubes)}
    where = np.empty(len(family), dtype=np.int64)
    for i, c in enumerate(family.cubes):
        d = dilate(c, factor)
        key = (d.center, d.side)
        if key not in lookup:
            lookup[key] = len(cubes)
            cubes.append(d)
        where[i] = lookup[key]
    ext = build_family(measure, cubes, family.params)
    if len(ext) != len(cubes):
        raise EmptyFamily("dilated family lost cubes")  # dilates of positive-mass cubes never vanish
    ext.side_grid = family.side_grid
    ext.center_stride = family.center_stride
    return ext, where
