"""Oscillation functionals and regular-BMO (semi-)norms on a cube family.

Five norms are available. ``B``, ``C`` and ``D`` are explicit maxima of
ratios built from cube averages (:func:`direct_norms`). ``E`` and ``A(rho)``
ask for the least constant ``C`` for which per-cube constants ``f_Q`` exist
with

    (1 / mu(rho Q)) * sum_{x in Q} |f(x) - f_Q| m(x) <= C     (every cube)
    |f_Q - f_R| <= C * K(Q, R)                               (nested pairs)

(``E`` uses doubling cubes only and ``rho = 1``). That least constant is
found by bisection; feasibility at a fixed ``C`` is an interval-bounded
difference system (:mod:`rbmo_lab.constraints`).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .constraints import DifferenceSystem
from .errors import InfeasibleAtUpperBound, InvalidSpec, LengthMismatch, NoDoublingCubes, NotFound, ZeroMass
from .geometry import Cube, CubeFamily, dilate, smallest_doubling_dilate
from .measure import AtomicMeasure, mu_cube

log = logging.getLogger(__name__)

REL_TOL = 1e-6
MAX_BISECTIONS = 80
# The trivial lower bound is probed this much above itself: at the bound the
# binding cube's interval is a single point and rounding noise decides.
FLOOR_SLACK = 1e-10


def as_values(measure: AtomicMeasure, f) -> np.ndarray:
    v = np.asarray(f, dtype=np.float64).reshape(-1)
    if v.shape[0] != measure.n_atoms:
        raise LengthMismatch(f"function has {v.shape[0]} values, measure has {measure.n_atoms} atoms")
    if not np.all(np.isfinite(v)):
        raise InvalidSpec("function values must be finite")
    return v


def average(measure: AtomicMeasure, f, q: Cube) -> float:
    v = as_values(measure, f)
    mask = measure.cube_mask(q.center, q.side)
    mass = measure.masses[mask].sum()
    if mass <= 0:
        raise ZeroMass(f"{q} carries no mass")
    return float((v[mask] * measure.masses[mask]).sum() / mass)


def _dilated_mass(measure, q, rho):
    mass = mu_cube(measure, q) if rho == 1 else mu_cube(measure, dilate(q, rho))
    if mass <= 0:
        raise ZeroMass(f"{rho}-dilate of {q} carries no mass")
    return mass


def oscillation(measure: AtomicMeasure, f, q: Cube, t: float, rho: float = 1.0) -> float:
    """``(1 / mu(rho Q)) * integral over Q of |f - t|``."""
    v = as_values(measure, f)
    den = _dilated_mass(measure, q, rho)
    mask = measure.cube_mask(q.center, q.side)
    return float((np.abs(v[mask] - t) * measure.masses[mask]).sum() / den)


def lp_oscillation(measure: AtomicMeasure, f, q: Cube, t: float, p: float, rho: float = 1.0) -> float:
    """``((1 / mu(rho Q)) * integral over Q of |f - t|**p) ** (1/p)``."""
    if not p >= 1:
        raise InvalidSpec("p must be at least 1")
    v = as_values(measure, f)
    den = _dilated_mass(measure, q, rho)
    mask = measure.cube_mask(q.center, q.side)
    return float(((np.abs(v[mask] - t) ** p * measure.masses[mask]).sum() / den) ** (1.0 / p))


class DeviationProfile:
    """The convex piecewise-linear map ``t -> sum w_i |v_i - t| / den``.

    Values at the sorted breakpoints come from prefix sums, so sublevel sets
    are read off exactly instead of scanning ``t``.
    """

    def __init__(self, values, weights, den: float):
        order = np.argsort(values, kind="stable")
        self.v = np.asarray(values, dtype=np.float64)[order]
        self.w = np.asarray(weights, dtype=np.float64)[order]
        self.den = float(den)
        self.total = float(self.w.sum())
        cw = np.cumsum(self.w)
        cs = np.cumsum(self.w * self.v)
        left = self.v * cw - cs
        right = (cs[-1] - cs) - self.v * (self.total - cw)
        self.phi = (left + right) / self.den
        self.minimum = float(self.phi.min())
        self._cw = cw

    def __call__(self, t: float) -> float:
        return float((np.abs(self.v - t) * self.w).sum() / self.den)

    def median(self) -> float:
        """Midpoint of the set of minimizers (the weighted-median plateau)."""
        half = 0.5 * self.total
        k = int(np.searchsorted(self._cw, half, side="left"))
        k = min(k, len(self.v) - 1)
        if self._cw[k] == half and k + 1 < len(self.v):
            return 0.5 * (self.v[k] + self.v[k + 1])
        return float(self.v[k])

    def sublevel(self, bound: float):
        """``(lo, hi)`` with ``{t : profile(t) <= bound} = [lo, hi]``, or None."""
        phi, v = self.phi, self.v
        if bound < self.minimum:
            return None
        inside = np.flatnonzero(phi <= bound)
        a, b = int(inside[0]), int(inside[-1])
        slope = self.total / self.den
        if a == 0:
            lo = v[0] - (bound - phi[0]) / slope
        else:
            lo = v[a] - (bound - phi[a]) / (phi[a - 1] - phi[a]) * (v[a] - v[a - 1])
        if b == len(v) - 1:
            hi = v[-1] + (bound - phi[-1]) / slope
        else:
            hi = v[b] + (bound - phi[b]) / (phi[b + 1] - phi[b]) * (v[b + 1] - v[b])
        return float(lo), float(max(lo, hi))


def sublevel_interval(measure: AtomicMeasure, f, q: Cube, bound: float, rho: float = 1.0):
    """Closed interval of ``t`` with ``oscillation(f, Q, t, rho) <= bound``.

    Returns ``None`` when the bound is below the minimum.
    """
    v = as_values(measure, f)
    den = _dilated_mass(measure, q, rho)
    mask = measure.cube_mask(q.center, q.side)
    return DeviationProfile(v[mask], measure.masses[mask], den).sublevel(bound)


# -- norm estimates ---------------------------------------------------------


@dataclass
class NormEstimate:
    """A norm value plus the per-cube constants that realize it.

    ``witness`` maps family cube indices to ``f_Q`` (for E and A) or to cube
    averages (for B, C, D).
    """

    tag: str
    value: float
    witness: dict
    family: CubeFamily
    rho: float | None = None
    info: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "tag": self.tag,
            "value": self.value,
            "rho": self.rho,
            "family": {
                "size": len(self.family),
                "side_grid": list(self.family.side_grid),
                "center_stride": self.family.center_stride,
                "beta": self.family.params.beta,
            },
            "witness": [[int(i), float(c)] for i, c in sorted(self.witness.items())],
            **({"info": self.info} if self.info else {}),
        }


def _members(measure: AtomicMeasure, family: CubeFamily, i: int) -> np.ndarray:
    cache = family.__dict__.setdefault("_member_cache", {})
    if i not in cache:
        c = family.cubes[i]
        cache[i] = np.flatnonzero(measure.cube_mask(c.center, c.side))
    return cache[i]


def _dilated_masses(measure, family, rho):
    if rho == 1:
        return np.asarray(family.masses)
    cache = family.__dict__.setdefault("_dilated_cache", {})
    if rho not in cache:
        cache[rho] = np.array([mu_cube(measure, dilate(c, rho)) for c in family.cubes])
    return cache[rho]


def cube_averages(measure: AtomicMeasure, f, family: CubeFamily, indices=None) -> np.ndarray:
    v = as_values(measure, f)
    idx = range(len(family)) if indices is None else indices
    out = []
    for i in idx:
        atoms = _members(measure, family, i)
        w = measure.masses[atoms]
        out.append((v[atoms] * w).sum() / w.sum())
    return np.array(out)


def direct_norms(measure: AtomicMeasure, f, family: CubeFamily, rho: float = 2.0,
                 tags=("B", "C", "D"), max_steps: int = 64) -> list[NormEstimate]:
    """B, C and D norms: maxima of the defining ratios over the family."""
    v = as_values(measure, f)
    if not rho > 1 and ({"B", "C"} & set(tags)):
        raise InvalidSpec("B and C norms need rho > 1")
    avgs = cube_averages(measure, v, family)
    mu_rho = _dilated_masses(measure, family, rho)
    dpairs, dk = family.doubling_pairs()
    out = []
    for tag in tags:
        if tag == "B":
            out.append(_b_norm(measure, v, family, rho, avgs, mu_rho, dpairs, dk, max_steps))
        elif tag == "C":
            osc = np.array([_dev(measure, v, family, i, avgs[i]) / mu_rho[i] for i in range(len(family))])
            pairs, k = family.nested_pairs, family.pair_k
            pair_val = 0.0
            if len(pairs):
                a, b = pairs[:, 0], pairs[:, 1]
                factor = mu_rho[a] / family.masses[a] + mu_rho[b] / family.masses[b]
                pair_val = float(np.max(np.abs(avgs[a] - avgs[b]) / (k * factor)))
            witness = {i: float(avgs[i]) for i in range(len(family))}
            out.append(NormEstimate(f"C({rho:g})", max(float(osc.max()), pair_val), witness, family, rho,
                                    {"osc": float(osc.max()), "pairs": pair_val}))
        elif tag == "D":
            dbl = family.doubling_indices
            if len(dbl) == 0:
                raise NoDoublingCubes("the family has no doubling cube")
            osc = max(_dev(measure, v, family, i, avgs[i]) / family.masses[i] for i in dbl)
            pair_val = 0.0
            if len(dpairs):
                pair_val = float(np.max(np.abs(avgs[dpairs[:, 0]] - avgs[dpairs[:, 1]]) / dk))
            witness = {int(i): float(avgs[i]) for i in dbl}
            out.append(NormEstimate("D", max(float(osc), pair_val), witness, family, None,
                                    {"osc": float(osc), "pairs": pair_val}))
        else:
            raise InvalidSpec(f"unknown direct norm {tag!r}")
    return out


def _dev(measure, v, family, i, t):
    atoms = _members(measure, family, i)
    return float((np.abs(v[atoms] - t) * measure.masses[atoms]).sum())


def _b_norm(measure, v, family, rho, avgs, mu_rho, dpairs, dk, max_steps):
    witness, excluded, osc = {}, [], 0.0
    for i, q in enumerate(family.cubes):
        try:
            qt = smallest_doubling_dilate(measure, q, family.params, max_steps)
        except NotFound:
            log.warning("no doubling dilate for cube %d within %d steps; excluded", i, max_steps)
            excluded.append(i)
            continue
        t = average(measure, v, qt) if qt is not q else avgs[i]
        witness[i] = float(t)
        osc = max(osc, float(_dev(measure, v, family, i, t) / mu_rho[i]))
    pair_val = 0.0
    if len(dpairs):
        pair_val = float(np.max(np.abs(avgs[dpairs[:, 0]] - avgs[dpairs[:, 1]]) / dk))
    info = {"osc": osc, "pairs": pair_val}
    if excluded:
        info["excluded"] = excluded
    return NormEstimate(f"B({rho:g})", max(osc, pair_val), witness, family, rho, info)


def parse_tag(tag: str, rho: float | None = None) -> tuple[str, float]:
    """``"E"`` -> ("E", 1); ``"A"``/``"A(2)"`` -> ("A", rho)."""
    tag = tag.strip()
    if tag.upper() == "E":
        return "E", 1.0
    if tag[:1].upper() == "A":
        rest = tag[1:].strip("() ")
        r = float(rest) if rest else (2.0 if rho is None else float(rho))
        if not r > 1:
            raise InvalidSpec("the A norm needs rho > 1")
        return "A", r
    raise InvalidSpec(f"feasibility norms are E or A(rho), got {tag!r}")


def feasibility_norm(measure: AtomicMeasure, f, family: CubeFamily, tag: str = "E",
                     rho: float | None = None, rel_tol: float = REL_TOL,
                     max_iter: int = MAX_BISECTIONS) -> NormEstimate:
    """Least constant of the E or A(rho) definition, with witness constants.

    The function is first normalized to ``[-1, 1]`` by an affine map so the
    bisection is invariant under ``f -> c f + d``. The trivial lower bound
    (every cube at its own weighted median) is probed first, relaxed by
    ``FLOOR_SLACK``, and returned when feasible; otherwise the bracket between it and the constant
    global-median witness is bisected to relative width ``rel_tol`` and its
    feasible (upper) end is returned.
    """
    kind, rho_eff = parse_tag(tag, rho)
    v = as_values(measure, f)
    if kind == "E":
        cubes = family.doubling_indices
        if len(cubes) == 0:
            raise NoDoublingCubes("the family has no doubling cube")
        pairs, pk = family.doubling_pairs()
        label = "E"
    else:
        cubes = np.arange(len(family))
        pairs, pk = family.nested_pairs, family.pair_k
        label = f"A({rho_eff:g})"
    rho_out = None if kind == "E" else rho_eff

    fmin, fmax = float(v.min()), float(v.max())
    shift = 0.5 * (fmin + fmax)
    scale = 0.5 * (fmax - fmin)
    if scale == 0.0:
        return NormEstimate(label, 0.0, {int(i): float(v[0]) for i in cubes}, family, rho_out,
                            {"iterations": 0})
    u = (v - shift) / scale

    pos = {int(c): k for k, c in enumerate(cubes)}
    local = np.array([[pos[int(a)], pos[int(b)]] for a, b in pairs], dtype=np.int64).reshape(-1, 2)
    system = DifferenceSystem(len(cubes), local, pk)
    dens = _dilated_masses(measure, family, rho_eff)
    profiles = []
    for i in cubes:
        atoms = _members(measure, family, int(i))
        profiles.append(DeviationProfile(u[atoms], measure.masses[atoms], dens[i]))

    def probe(c):
        lo = np.empty(len(profiles))
        hi = np.empty(len(profiles))
        for k, prof in enumerate(profiles):
            iv = prof.sublevel(c)
            if iv is None:
                return None
            lo[k], hi[k] = iv
        return system.solve(lo, hi, scale=c, tol=1e-13)

    floor = max(p.minimum for p in profiles)
    eased = floor * (1 + FLOOR_SLACK)
    witness = probe(eased)
    iterations = 1
    if witness is not None:
        best = eased
    else:
        everything = DeviationProfile(u, measure.masses, 1.0)
        med = everything.median()
        top = max(p(med) for p in profiles) * (1 + 1e-12) + 1e-15
        witness = probe(top)
        if witness is None:
            raise InfeasibleAtUpperBound(f"constant median witness rejected at C={top!r}")
        lo, hi = eased, top
        while hi - lo > rel_tol * hi and iterations < max_iter:
            mid = 0.5 * (lo + hi)
            got = probe(mid)
            iterations += 1
            if got is None:
                lo = mid
            else:
                hi, witness = mid, got
        best = hi
    consts = {int(i): float(shift + scale * w) for i, w in zip(cubes, witness)}
    return NormEstimate(label, float(scale * best), consts, family, rho_out,
                        {"iterations": iterations, "lower_bound": float(scale * floor)})


def witness_violation(measure: AtomicMeasure, f, est: NormEstimate) -> float:
    """Largest defining ratio achieved by the witness constants of an
    E, A or D estimate."""
    v = as_values(measure, f)
    fam = est.family
    kind = est.tag[0]
    if kind not in "EAD":
        raise InvalidSpec(f"witness check is defined for E, A and D, not {est.tag}")
    rho = est.rho if est.rho is not None else 1.0
    dens = _dilated_masses(measure, fam, rho)
    worst = 0.0
    for i, t in est.witness.items():
        worst = max(worst, _dev(measure, v, fam, i, t) / dens[i])
    if kind in "ED":
        pairs, pk = fam.doubling_pairs()
    else:
        pairs, pk = fam.nested_pairs, fam.pair_k
    for (a, b), k in zip(pairs, pk):
        if int(a) in est.witness and int(b) in est.witness:
            worst = max(worst, abs(est.witness[int(a)] - est.witness[int(b)]) / k)
    return worst


# -- John-Nirenberg level sets ----------------------------------------------


@dataclass
class JNProfile:
    lambdas: np.ndarray
    masses: np.ndarray
    normalized: np.ndarray  # masses / mu(rho Q)
    slope: float
    intercept: float
    r_squared: float
    residual: float
    fit_points: int


def jn_profile(measure: AtomicMeasure, f, q: Cube, f_q: float, lambdas, rho: float = 1.0) -> JNProfile:
    """Level-set masses ``mu{x in Q : |f(x) - f_Q| > lambda}`` and a log-linear fit."""
    v = as_values(measure, f)
    lam = np.asarray(lambdas, dtype=np.float64)
    if lam.ndim != 1 or len(lam) == 0 or np.any(lam <= 0) or np.any(np.diff(lam) <= 0):
        raise InvalidSpec("lambdas must be positive and strictly increasing")
    mask = measure.cube_mask(q.center, q.side)
    dev = np.abs(v[mask] - f_q)
    w = measure.masses[mask]
    masses = np.array([w[dev > x].sum() for x in lam])
    den = _dilated_mass(measure, q, rho)
    keep = masses > 0
    slope = intercept = r2 = resid = math.nan
    if keep.sum() >= 2:
        x, y = lam[keep], np.log(masses[keep])
        slope, intercept = np.polyfit(x, y, 1)
        fitted = slope * x + intercept
        ss_res = float(np.sum((y - fitted) ** 2))
        ss_tot = float(np.sum((y - y.mean()) ** 2))
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
        resid = math.sqrt(ss_res / len(x))
    return JNProfile(lam, masses, masses / den, float(slope), float(intercept), float(r2),
                     float(resid), int(keep.sum()))
