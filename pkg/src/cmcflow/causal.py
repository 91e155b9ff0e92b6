"""Null geodesics, observer horizons and the future causal boundary of warped models.

Null geodesics are parameterized by t.  With conserved momenta
``p_k = a_k^2 dx^k/dsigma`` and the null condition ``dt/dsigma = +-E``,
``E(t)^2 = sum_k p_k^2 / a_k^2``, the spatial motion is a pure quadrature:
``dx^k/dt = +- p_k / (a_k^2 E)``.
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad, solve_ivp

from .errors import DomainError, NotApplicableError
from .spacetime import geodesic_rhs

__all__ = [
    "NullGeodesic",
    "HorizonReport",
    "BoundaryClass",
    "CompletenessReport",
    "null_geodesic",
    "null_fan",
    "fan_directions",
    "confinement_bound",
    "observer_horizon_test",
    "classify_boundary",
    "completeness_test",
    "torus_shape",
]

RTOL, ATOL = 1e-12, 1e-13


def _orientation_sign(orientation: str) -> float:
    if orientation not in ("past", "future"):
        raise ValueError("orientation must be 'past' or 'future'")
    return -1.0 if orientation == "past" else 1.0


def _clip_stop(M, t0, t_stop, sign):
    """Stop time inside the open model interval, and whether it was clipped."""
    if sign < 0:
        edge = M.t_min + 1e-9 * max(1.0, abs(M.t_min))
        return (t_stop, False) if t_stop > edge else (edge, True)
    if math.isinf(M.t_max):
        if math.isinf(t_stop):
            raise DomainError("future-directed run needs a finite t_stop")
        return t_stop, False
    edge = M.t_max - 1e-9 * max(1.0, abs(M.t_max))
    return (t_stop, False) if t_stop < edge else (edge, True)


@dataclass
class NullGeodesic:
    start: np.ndarray  # (t0, x^1..x^n)
    momenta: np.ndarray
    orientation: str
    t: np.ndarray
    x: np.ndarray  # shape (len(t), n)
    truncated: bool = False

    @property
    def displacement(self) -> np.ndarray:
        return self.x[-1] - self.x[0]

    def affine_check(self, M) -> dict:
        """Re-integrate with the affine geodesic equations and compare.

        Returns the worst relative drift of the momenta, the worst relative null
        residual, and the endpoint mismatch with the t-parameterized solution.
        """
        n = M.n
        sign = _orientation_sign(self.orientation)
        t0 = float(self.start[0])
        a, _ = M.warp(t0, order=1)
        p = self.momenta
        E0 = math.sqrt(float(np.sum(p**2 / a**2)))
        y0 = np.concatenate(([t0], self.start[1:], [sign * E0], p / a**2))
        t_end = float(self.t[-1])

        def hit(_, y):
            return y[0] - t_end
        hit.terminal = True

        def inv_E(t):
            at, _ = M.warp(t, order=1)
            return 1.0 / math.sqrt(float(np.sum(p**2 / at**2)))

        # affine length needed to reach t_end, with room for the event to fire
        span = 1.01 * abs(quad(inv_E, min(t0, t_end), max(t0, t_end), epsrel=1e-10, limit=200)[0])
        sol = solve_ivp(geodesic_rhs(M), (0.0, span), y0, method="DOP853",
                        events=hit, rtol=RTOL, atol=ATOL, dense_output=False)
        Y = sol.y if not sol.t_events[0].size else np.column_stack([sol.y, sol.y_events[0][0]])
        t = Y[0]
        aa, _ = M.warp(t, order=1)
        mom = aa**2 * Y[n + 2:]
        scale = max(float(np.max(np.abs(p))), 1e-300)
        drift = float(np.max(np.abs(mom - p[:, None]))) / scale
        E2 = np.sum(mom**2 / aa**2, axis=0)
        null = float(np.max(np.abs(Y[n + 1] ** 2 - E2) / E2))
        end_gap = float(np.max(np.abs(Y[1:n + 1, -1] - self.x[-1])))
        return {"momentum_drift": drift, "null_residual": null, "endpoint_gap": end_gap}


def _fan_rhs(M, P, sign):
    """dx/dt for a batch of momenta P of shape (m, n), flattened."""
    def rhs(t, _):
        a, _ = M.warp(t, order=1)
        a2 = a * a
        E = np.sqrt(np.sum(P**2 / a2, axis=1, keepdims=True))
        return (sign * P / (a2 * E)).ravel()
    return rhs


def null_fan(M, start, momenta, t_stop, orientation="past", num=2) -> list:
    """Integrate many null geodesics from one start point in a single solve."""
    start = np.asarray(start, dtype=float)
    P = np.atleast_2d(np.asarray(momenta, dtype=float))
    n = M.n
    if start.shape != (n + 1,):
        raise ValueError(f"start must have {n + 1} entries (t, x^1..x^{n})")
    if P.shape[1] != n:
        raise ValueError(f"momenta must have {n} components")
    if np.any(np.all(P == 0, axis=1)):
        raise ValueError("momenta must not all vanish")
    sign = _orientation_sign(orientation)
    t0 = float(start[0])
    M.require(t0)
    if sign * (t_stop - t0) <= 0:
        raise ValueError(f"t_stop must lie to the {orientation} of t0")
    t_end, truncated = _clip_stop(M, t0, float(t_stop), sign)
    y0 = np.tile(start[1:], P.shape[0])
    t_eval = np.linspace(t0, t_end, max(int(num), 2))
    sol = solve_ivp(_fan_rhs(M, P, sign), (t0, t_end), y0,
                    method="DOP853", t_eval=t_eval, rtol=RTOL, atol=ATOL)
    if not sol.success:
        raise ArithmeticError(sol.message)
    X = sol.y.reshape(P.shape[0], n, -1)
    return [NullGeodesic(start.copy(), P[i].copy(), orientation, sol.t.copy(), X[i].T.copy(), truncated)
            for i in range(P.shape[0])]


def null_geodesic(M, start, momenta, t_stop, orientation="past", num=200) -> NullGeodesic:
    return null_fan(M, start, [momenta], t_stop, orientation, num)[0]


def confinement_bound(M, k: int, t1: float, t0: float, method: str = "exact") -> float:
    """Integral of 1/a over [t1, t0] for coordinate k (0-based); t0 may be inf.

    This is the largest |dx^k| any past null geodesic picks up between the slices.
    ``method='quad'`` uses adaptive quadrature instead of the closed form.
    """
    if not t1 < t0:
        raise ValueError("need t1 < t0")
    M.require(t1)
    if not t0 <= M.t_max:
        raise DomainError(f"t0 = {t0} beyond t_max = {M.t_max}")
    law = M.fibers[M.coord_fiber[k]].law
    if method == "exact":
        return float(law.inverse_integral(t1, t0))
    if method == "quad":
        f = lambda t: 1.0 / float(law.value(t))  # noqa: E731
        if t1 > 0 and math.isfinite(t0) and t0 > 10 * t1:
            edges = np.geomspace(t1, t0, int(math.log10(t0 / t1)) + 2)
        else:
            edges = np.array([t1, t0])
        return float(sum(quad(f, lo, hi, epsabs=0.0, epsrel=1e-12, limit=500)[0]
                         for lo, hi in zip(edges[:-1], edges[1:])))
    raise ValueError("method must be 'exact' or 'quad'")


def fan_directions(n: int, fan: int) -> np.ndarray:
    """Unit momenta: every axis, plus `fan` mixtures per axis pair."""
    dirs = [np.eye(n)[k] for k in range(n)]
    for j, k in itertools.combinations(range(n), 2):
        for theta in np.linspace(0.0, 0.5 * np.pi, fan + 2)[1:-1]:
            d = np.zeros(n)
            d[j], d[k] = math.cos(theta), math.sin(theta)
            dirs.append(d)
    return np.array(dirs)


def _aitken(s):
    """Aitken extrapolation of the last three terms; falls back to the last term."""
    if len(s) < 3:
        return float(s[-1])
    s0, s1, s2 = s[-3:]
    den = s2 - 2 * s1 + s0
    if not math.isfinite(den) or abs(den) < 1e-14 * max(1.0, abs(s2)):
        return float(s2)
    est = s2 - (s2 - s1) ** 2 / den
    return float(est) if est >= s2 else float(s2)


@dataclass
class HorizonReport:
    t1: float
    xi: tuple
    t_cap: float
    ladder: list
    sampled: list  # largest |dx^k| seen per axis
    tail_estimate: list  # extrapolated sup over t0 per axis
    analytic: list  # exact sup over t0 < t_max per axis
    periods: list
    covers_axis: list = field(default_factory=list)

    @property
    def covers_slice(self) -> bool:
        return all(self.covers_axis)

    def to_dict(self):
        f = lambda v: "inf" if math.isinf(v) else v  # noqa: E731
        return {"t1": self.t1, "xi": list(self.xi), "t_cap": self.t_cap,
                "ladder": list(self.ladder), "sampled": self.sampled,
                "tail_estimate": [f(v) for v in self.tail_estimate],
                "analytic": [f(v) for v in self.analytic], "periods": self.periods,
                "covers_axis": self.covers_axis, "covers_slice": self.covers_slice}


def _rung_extent(M, t0, xi, dirs, t1):
    geos = null_fan(M, (t0, *xi), dirs, t1, "past")
    return np.max(np.abs([g.displacement for g in geos]), axis=0)


def observer_horizon_test(M, xi, t1: float, fan: int = 4, t_cap: float = 1e6,
                          rungs: int = 13, jobs: int = 1) -> HorizonReport:
    """Does the past of the t-line through xi contain the whole t1-slice?

    Past null fans are shot from a geometric ladder of heights up to t_cap.
    An axis counts as covered when the exact supremum of the reach is at least
    its period; sampled and tail-extrapolated reaches are reported too.
    """
    if fan < 1:
        raise ValueError("fan must be at least 1")
    M.require(t1)
    n = M.n
    xi = tuple(float(v) for v in np.broadcast_to(np.asarray(xi, dtype=float), (n,)))
    top = min(t_cap, M.t_max - 1e-9 * max(1.0, abs(M.t_max))) if not math.isinf(M.t_max) else t_cap
    if not top > t1:
        raise ValueError("t_cap must exceed t1")
    lo = t1 + max(1.0, abs(t1))
    ladder = np.geomspace(min(lo, top), top, rungs) if lo < top else np.array([top])
    dirs = fan_directions(n, fan)
    args = [(M, float(t0), xi, dirs, t1) for t0 in ladder]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_rung = list(pool.map(_rung_extent, *zip(*args)))
    else:
        per_rung = [_rung_extent(*a) for a in args]
    per_rung = np.array(per_rung)
    sampled = per_rung.max(axis=0)
    tail = [_aitken(per_rung[:, k]) for k in range(n)]
    analytic = [confinement_bound(M, k, t1, M.t_max) for k in range(n)]
    periods = list(M.coord_periods)
    covers = [bool(analytic[k] >= periods[k]) for k in range(n)]
    return HorizonReport(float(t1), xi, float(top), ladder.tolist(), sampled.tolist(),
                         tail, analytic, periods, covers)


_SUP = str.maketrans("0123456789", "⁰¹²³⁴⁵⁶⁷⁸⁹")


def torus_shape(dim: int) -> str:
    if dim == 0:
        return "point"
    label = "T" + str(dim).translate(_SUP)
    return label + " (circle)" if dim == 1 else label


def _future_reference(M) -> float:
    if not (math.isinf(M.t_max) and M.t_max > 0):
        raise NotApplicableError("classification needs a model extending to t = inf")
    return M.t_min + 1.0 if math.isfinite(M.t_min) else 0.0


@dataclass(frozen=True)
class BoundaryClass:
    divergent_fibers: frozenset
    convergent_fibers: frozenset
    boundary_shape: str
    spacelike: bool
    integrals: tuple = ()  # integral of 1/a_i from the reference time to inf

    def to_dict(self):
        return {"divergent_fibers": sorted(self.divergent_fibers),
                "convergent_fibers": sorted(self.convergent_fibers),
                "boundary_shape": self.boundary_shape, "spacelike": self.spacelike,
                "integrals": ["inf" if math.isinf(v) else v for v in self.integrals]}


def classify_boundary(M) -> BoundaryClass:
    """Split fibers by whether the integral of 1/a_i to infinity diverges.

    Convergent fibers are the ones along which observers have horizons; the
    boundary is the product of their tori, a point when there are none.
    """
    t_ref = _future_reference(M)
    ints = tuple(float(f.law.inverse_integral(t_ref, math.inf)) for f in M.fibers)
    conv = frozenset(i for i, v in enumerate(ints) if math.isfinite(v))
    div = frozenset(range(len(ints))) - conv
    dim = sum(M.fibers[i].dim for i in conv)
    return BoundaryClass(div, conv, torus_shape(dim), True, ints)


@dataclass(frozen=True)
class CompletenessReport:
    per_fiber: tuple  # True where the integral of a_i to infinity diverges
    integrals: tuple

    @property
    def overall(self) -> bool:
        return all(self.per_fiber)

    def to_dict(self):
        return {"future_complete_criterion": list(self.per_fiber), "overall": self.overall,
                "integrals": ["inf" if math.isinf(v) else v for v in self.integrals]}


def completeness_test(M) -> CompletenessReport:
    t_ref = _future_reference(M)
    ints = tuple(float(f.law.integral(t_ref, math.inf)) for f in M.fibers)
    return CompletenessReport(tuple(math.isinf(v) for v in ints), ints)
