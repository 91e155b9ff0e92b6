"""Raychaudhuri comparison: mean-curvature bounds for distance slices and barrier pairs.

Along a unit timelike geodesic normal to a family of equidistant surfaces,
``dH/du = -Ric(g', g') - H^2/n - sigma^2``.  When ``Ric >= -n*lam`` the
solution is dominated by the model solution ``n*sqrt(lam)*coth(sqrt(lam)*u)``,
which degenerates to ``n/u`` for ``lam = 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import DomainError, NoBarrierError

__all__ = [
    "BarrierCertificate",
    "RaychaudhuriTrace",
    "ExistenceReport",
    "mean_curvature_bound",
    "bound_inverse",
    "raychaudhuri_integrate",
    "distance_sphere_slice",
    "future_existence_time",
    "barrier_pair_select",
]

BLOWUP_LEVEL = 1e8  # |H| beyond this is treated as a focal point


def mean_curvature_bound(n, tau, lam=0.0):
    """n/tau for lam = 0, n*sqrt(lam)*coth(sqrt(lam)*tau) otherwise.

    Accepts array ``tau``.  For tiny ``sqrt(lam)*tau`` the coth is expanded,
    which keeps the value continuous as lam -> 0.
    """
    tau_arr = np.asarray(tau, dtype=float)
    if np.any(~(tau_arr > 0)):
        raise ValueError("tau must be positive")
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    if lam == 0:
        out = n / tau_arr
    else:
        r = math.sqrt(lam)
        x = r * tau_arr
        small = x < 1e-4
        with np.errstate(divide="ignore", invalid="ignore"):
            big = n * r / np.tanh(np.where(small, 1.0, x))
        series = (n / tau_arr) * (1.0 + x * x / 3.0 - x**4 / 45.0)
        out = np.where(small, series, big)
    return float(out) if np.ndim(out) == 0 else out


def bound_inverse(n, target, lam=0.0) -> float:
    """The tau with mean_curvature_bound(n, tau, lam) == target."""
    if lam == 0:
        if not target > 0:
            raise NoBarrierError(f"bound target {target} must be positive")
        return n / target
    floor = n * math.sqrt(lam)
    if not target > floor:
        raise NoBarrierError(f"bound target {target} is not above the asymptote n*sqrt(lambda) = {floor}")
    return math.atanh(floor / target) / math.sqrt(lam)  # arcoth(y) = artanh(1/y)


@dataclass(frozen=True)
class BarrierCertificate:
    tau: float
    n: int
    lam: float
    bound: float
    t_slice: float
    slice_H: float = math.nan  # actual slice mean curvature, when a model is at hand

    @property
    def verified(self) -> bool:
        return bool(self.slice_H <= self.bound)

    def to_dict(self, t1=None):
        out = {"tau": self.tau, "n": self.n, "lambda": self.lam, "bound": self.bound,
               "t2": self.t_slice, "slice_H": self.slice_H}
        if t1 is not None:
            out = {"t1": t1, **out}
        return out


@dataclass
class RaychaudhuriTrace:
    u: np.ndarray
    H: np.ndarray
    bound: np.ndarray  # comparison solution, nan where u <= 0
    blowup: float | None = None  # u at which H -> -inf, if reached

    def max_excess(self) -> float:
        """Largest H - bound over samples where the bound is defined."""
        ok = np.isfinite(self.bound)
        return float(np.max(self.H[ok] - self.bound[ok])) if ok.any() else -math.inf


def raychaudhuri_integrate(ric_fn, H0, u0, u1, n, sigma2_fn=None, lam=0.0,
                           num=201, rtol=1e-9, atol=1e-12) -> RaychaudhuriTrace:
    """Integrate the equality case of the Raychaudhuri inequality on [u0, u1].

    ``ric_fn(u)`` gives Ric(g', g') along the geodesic.  The returned bound uses
    ``u`` itself as the distance, so start at ``u0 > 0`` for a meaningful check.
    """
    if not u0 < u1:
        raise ValueError("need u0 < u1")
    if sigma2_fn is None:
        sigma2_fn = lambda u: 0.0  # noqa: E731

    def rhs(u, y):
        ric = float(ric_fn(u))
        s2 = float(sigma2_fn(u))
        if not (math.isfinite(ric) and math.isfinite(s2)):
            raise ValueError(f"non-finite curvature input at u = {u}")
        return [-ric - y[0] ** 2 / n - s2]

    def focal(u, y):
        return y[0] + BLOWUP_LEVEL
    focal.terminal = True
    focal.direction = -1

    u_eval = np.linspace(u0, u1, num)
    sol = solve_ivp(rhs, (u0, u1), [float(H0)], method="RK45", t_eval=u_eval,
                    events=focal, rtol=rtol, atol=atol)
    if sol.status < 0:
        raise ArithmeticError(sol.message)
    u = sol.t
    blowup = float(sol.t_events[0][0]) if sol.t_events[0].size else None
    bound = np.full(u.shape, np.nan)
    pos = u > 0
    if pos.any():
        bound[pos] = mean_curvature_bound(n, u[pos], lam)
    return RaychaudhuriTrace(u, sol.y[0], bound, blowup)


def distance_sphere_slice(M, t0: float, tau: float) -> BarrierCertificate:
    """Certificate for the set at distance tau from the t0-slice.

    In a warped model the t-lines are unit-speed maximizers normal to every
    slice, so that set is the (t0 + tau)-slice.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    M.require(t0)
    t2 = t0 + tau
    if not t2 < M.t_max:
        raise DomainError(f"t0 + tau = {t2} leaves the model (t_max = {M.t_max})")
    bound = mean_curvature_bound(M.n, tau, M.lam)
    return BarrierCertificate(float(tau), M.n, float(M.lam), bound, float(t2),
                              float(M.slice_mean_curvature(t2)))


@dataclass(frozen=True)
class ExistenceReport:
    t0: float
    T0: float
    c: float | None = None
    n_over_c: float = math.nan

    @property
    def sufficient(self):
        """T0 > n/c, or None without a forcing constant."""
        return None if self.c is None else bool(self.T0 > self.n_over_c)

    def to_dict(self):
        return {"t0": self.t0, "T0": "inf" if math.isinf(self.T0) else self.T0,
                "c": self.c, "sufficient": self.sufficient}


def future_existence_time(M, t0: float, c: float | None = None) -> ExistenceReport:
    """How long the normal geodesics from the t0-slice exist: t_max - t0."""
    M.require(t0)
    T0 = M.t_max - t0
    if c is None:
        return ExistenceReport(float(t0), float(T0))
    if not c > 0:
        raise ValueError("c must be positive")
    return ExistenceReport(float(t0), float(T0), float(c), M.n / c)


def barrier_pair_select(M, c: float, t_ref: float):
    """Return (t1, certificate) with slice H(t1) > c > certificate bound at t2.

    The bound target is c/2 when lam = 0.  For lam > 0 it is c/2 if that lies
    above the asymptote n*sqrt(lam), and the midpoint (c + n*sqrt(lam))/2 otherwise.
    """
    if not c > 0:
        raise ValueError("c must be positive")
    M.require(t_ref)
    n, lam = M.n, M.lam
    H_ref = float(M.slice_mean_curvature(t_ref))
    if not H_ref > c:
        raise NoBarrierError(f"slice at t_ref = {t_ref} has H = {H_ref:.6g}, not above c = {c}")
    floor = n * math.sqrt(lam)
    if lam > 0 and not c > floor:
        raise NoBarrierError(f"c = {c} does not exceed n*sqrt(lambda) = {floor}; no slice bound falls below c")
    target = 0.5 * c if (lam == 0 or 0.5 * c > floor) else 0.5 * (c + floor)
    tau = bound_inverse(n, target, lam)
    cert = distance_sphere_slice(M, t_ref, tau)
    return float(t_ref), cert
