"""Pointwise checks of the evolution estimates behind the forced flow.

With f = H - c and constant forcing c the mean curvature obeys

    (d/ds - Delta) f = -f (|A|^2 + Ric(nu, nu)),

where d/ds follows the normal motion.  Under Ric >= -n*lam on timelike
vectors, two weighted AM-GM (Peter-Paul) steps turn this into

    (d/ds - Delta) f^2 <= -(1/n) f^4 + n*e1*e2*c^4 + n*lam*e3

for any e1, e2, e3 > 0 whose f^4 coefficient stays at or below -1/n.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .hypersurface import (GraphSurface, PeriodicGrid, gradient, induced_geometry, laplacian_matrix,
                          mean_curvature, metric_data)

__all__ = [
    "EpsilonTriple",
    "MonitorReport",
    "select_epsilons",
    "peter_paul_check",
    "peter_paul_sweep",
    "flow_inequality_monitor",
    "SLACK_CONSTANT",
]

SLACK_CONSTANT = 10.0


@dataclass(frozen=True)
class EpsilonTriple:
    eps1: float
    eps2: float
    eps3: float
    n: int
    lam: float

    def __post_init__(self):
        if not min(self.eps1, self.eps2, self.eps3) > 0:
            raise ValueError("eps1, eps2, eps3 must be positive")
        if self.n < 1 or self.lam < 0:
            raise ValueError("need n >= 1 and lambda >= 0")

    def coefficient(self, exact: bool = False):
        """Coefficient of f^4 after both Peter-Paul steps."""
        num = Fraction if exact else float
        e1, e2, e3, lam = (num(v) for v in (self.eps1, self.eps2, self.eps3, self.lam))
        n = num(self.n)
        cubic = (4 / n) * (1 / (2 * e1) + e1 / (4 * e2))
        quad_term = n * lam / e3 if self.lam > 0 else num(0)
        return -2 / n + cubic + quad_term

    def satisfied(self) -> bool:
        return self.coefficient(exact=True) <= Fraction(-1, self.n)

    def constant(self, c: float) -> float:
        """Source term n e1 e2 c^4 + n lam e3."""
        return self.n * self.eps1 * self.eps2 * c**4 + self.n * self.lam * self.eps3


def select_epsilons(n: int, lam: float) -> EpsilonTriple:
    """(8, 32, 2 n^2 lam); e3 is a placeholder 1 when lam = 0."""
    if n < 1 or lam < 0:
        raise ValueError("need n >= 1 and lambda >= 0")
    e3 = 2 * n * n * lam if lam > 0 else 1
    return EpsilonTriple(8, 32, e3, n, lam)


def peter_paul_sweep(f, Hs, eps: EpsilonTriple, rtol: float = 1e-12):
    """Vectorised form of both inequalities; returns (cubic_ok, quadratic_ok) arrays."""
    f = np.asarray(f, dtype=float)
    Hs = np.asarray(Hs, dtype=float)
    f2 = f * f
    f4 = f2 * f2
    e1, e2, e3 = eps.eps1, eps.eps2, eps.eps3
    lhs = np.abs(f2 * f * Hs)
    rhs = f4 / (2 * e1) + 0.5 * e1 * (f4 / (2 * e2) + 0.5 * e2 * Hs**4)
    cubic = lhs <= rhs * (1 + rtol)
    k = 2 * eps.n * eps.lam
    quadratic = k * f2 <= k * (f4 / (2 * e3) + 0.5 * e3) * (1 + rtol)
    return cubic, quadratic


def peter_paul_check(f: float, Hs: float, eps: EpsilonTriple):
    """(True, None) or (False, 'cubic' | 'quadratic') naming the failed bound."""
    cubic, quadratic = peter_paul_sweep(f, Hs, eps)
    if not bool(cubic):
        return False, "cubic"
    if not bool(quadratic):
        return False, "quadratic"
    return True, None


@dataclass
class MonitorReport:
    identity_residual: float  # max |(d/ds - Delta) f + f (|A|^2 + Ric(nu,nu))|
    inequality_margin_min: float  # min of RHS - LHS over all points and snapshots
    slack: float
    violations: int
    location: tuple | None  # (step, grid index) of the smallest margin
    snapshots: int
    residual_per_snapshot: list

    @property
    def ok(self) -> bool:
        return self.violations == 0

    def to_dict(self):
        return {"identity_residual": self.identity_residual,
                "inequality_margin_min": self.inequality_margin_min,
                "slack": self.slack, "violations": self.violations,
                "location": None if self.location is None else list(self.location),
                "snapshots": self.snapshots, "ok": self.ok}


def _time_derivative(f_prev, f, f_next, h1, h2):
    """Second-order derivative at the middle of three unevenly spaced samples."""
    return (h1 * h1 * f_next - h2 * h2 * f_prev + (h2 * h2 - h1 * h1) * f) / (h1 * h2 * (h1 + h2))


def _snapshot_fields(M, grid, snap, c):
    surfaces = [GraphSurface(grid, np.asarray(snap[key], dtype=float)) for key in ("u_prev", "u", "u_next")]
    f_prev, f_mid, f_next = (mean_curvature(M, S)[0] - c for S in surfaces)
    return surfaces[1], f_prev, f_mid, f_next


def flow_inequality_monitor(M, grid: PeriodicGrid, snapshots, eps: EpsilonTriple, c: float,
                            slack_constant: float = SLACK_CONSTANT) -> MonitorReport:
    """Check the evolution identity and the f^2 inequality on flow snapshots.

    Each snapshot carries three consecutive heights (u_prev, u, u_next) and
    the two step sizes around the middle one.  The grid stores heights over
    fixed base points, so the derivative along the normal motion picks up the
    transport term f nu^k d_k.
    """
    snapshots = list(snapshots)
    if not snapshots:
        raise ValueError("run record has no consecutive snapshots")
    for snap in snapshots:
        missing = {"u_prev", "u", "u_next", "ds_prev", "ds_next"} - set(snap)
        if missing:
            raise ValueError(f"snapshot lacks {sorted(missing)}")
    dx = max(grid.spacing)
    ds_max = max(max(s["ds_prev"], s["ds_next"]) for s in snapshots)
    slack = slack_constant * (ds_max + dx * dx)
    source = eps.constant(c)

    worst_res, worst_margin, where, violations = 0.0, math.inf, None, 0
    per_snap = []
    for snap in snapshots:
        S, f_prev, f, f_next = _snapshot_fields(M, grid, snap, c)
        h1, h2 = float(snap["ds_prev"]), float(snap["ds_next"])
        K, w = laplacian_matrix(M, S)
        _, _, nu = metric_data(M, S)
        geo = induced_geometry(M, S)

        def lap(g):
            return -(K @ g.ravel()).reshape(g.shape) / w

        def material(prev, mid, nxt):
            df = _time_derivative(prev, mid, nxt, h1, h2)
            return df + f * np.sum(nu * gradient(grid, mid), axis=-1)

        res = material(f_prev, f, f_next) - lap(f) + f * (geo.A2 + geo.ric_nu)
        r = float(np.max(np.abs(res)))
        per_snap.append((int(snap.get("step", -1)), float(snap.get("s", math.nan)), r))
        worst_res = max(worst_res, r)

        lhs = material(f_prev**2, f * f, f_next**2) - lap(f * f)
        margin = -(f**4) / eps.n + source - lhs
        violations += int(np.count_nonzero(margin < -slack))
        i = int(np.argmin(margin))
        if margin.flat[i] < worst_margin:
            worst_margin = float(margin.flat[i])
            where = (int(snap.get("step", -1)),
                     tuple(int(j) for j in np.unravel_index(i, margin.shape)))
    return MonitorReport(worst_res, worst_margin, slack, violations, where, len(snapshots), per_snap)
