"""Multiply warped product spacetimes with flat torus fibers.

The metric is ``g = -dt^2 + sum_i a_i(t)^2 h_i`` with every ``h_i`` a flat
metric on a torus ``T^{n_i}`` of side ``2 b_i``.  Curvature is reported in the
orthonormal frame ``e_0 = d/dt``, ``e_k = a_{i(k)}^{-1} d/dx^k``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, ModelError

__all__ = [
    "PowerLaw",
    "Exponential",
    "Constant",
    "Sinh",
    "FiberSpec",
    "MultiWarpedSpacetime",
    "RicciDiagonal",
    "EnergyReport",
    "ricci_diagonal",
    "numerical_ricci",
    "fd_ricci_diagonal",
    "ric_on_frame_vectors",
    "check_energy_condition",
    "geodesic_rhs",
    "model_from_dict",
    "model_to_dict",
    "load_model",
]


# --------------------------------------------------------------------------
# warping laws


@dataclass(frozen=True)
class PowerLaw:
    """a(t) = t**exponent, defined for t > 0."""

    exponent: float

    def value(self, t):
        return np.power(t, self.exponent)

    def d1(self, t):
        p = self.exponent
        return p * np.power(t, p - 1.0)

    def d2(self, t):
        p = self.exponent
        return p * (p - 1.0) * np.power(t, p - 2.0)

    def is_positive_on(self, t_min, t_max):
        return t_min >= 0.0

    def inverse_integral(self, t1, t0):
        """Exact value of the integral of 1/a over [t1, t0]; t0 may be inf."""
        q = 1.0 - self.exponent
        if math.isinf(t0):
            return t1**q / -q if q < 0 else math.inf
        if q == 0.0:
            return math.log(t0 / t1)
        return (t0**q - t1**q) / q

    def integral(self, t1, t0):
        """Exact value of the integral of a over [t1, t0]; t0 may be inf."""
        q = 1.0 + self.exponent
        if math.isinf(t0):
            return t1**q / -q if q < 0 else math.inf
        if q == 0.0:
            return math.log(t0 / t1)
        return (t0**q - t1**q) / q

    def to_dict(self):
        return {"type": "power", "p": self.exponent}


@dataclass(frozen=True)
class Exponential:
    """a(t) = exp(rate * t)."""

    rate: float

    def value(self, t):
        return np.exp(self.rate * np.asarray(t, dtype=float))

    def d1(self, t):
        return self.rate * self.value(t)

    def d2(self, t):
        return self.rate**2 * self.value(t)

    def is_positive_on(self, t_min, t_max):
        return True

    def inverse_integral(self, t1, t0):
        r = self.rate
        if r == 0.0:
            return t0 - t1
        if math.isinf(t0):
            return math.exp(-r * t1) / r if r > 0 else math.inf
        return (math.exp(-r * t1) - math.exp(-r * t0)) / r

    def integral(self, t1, t0):
        r = self.rate
        if r == 0.0:
            return t0 - t1
        if math.isinf(t0):
            return -math.exp(r * t1) / r if r < 0 else math.inf
        return (math.exp(r * t0) - math.exp(r * t1)) / r

    def to_dict(self):
        return {"type": "exponential", "rate": self.rate}


@dataclass(frozen=True)
class Constant:
    """a(t) = value."""

    value_: float

    def value(self, t):
        return np.full(np.shape(t), self.value_, dtype=float)

    def d1(self, t):
        return np.zeros(np.shape(t))

    def d2(self, t):
        return np.zeros(np.shape(t))

    def is_positive_on(self, t_min, t_max):
        return self.value_ > 0

    def inverse_integral(self, t1, t0):
        return (t0 - t1) / self.value_

    def integral(self, t1, t0):
        return (t0 - t1) * self.value_

    def to_dict(self):
        return {"type": "constant", "value": self.value_}


@dataclass(frozen=True)
class Sinh:
    """a(t) = sinh(rate * t) / rate, rate > 0, defined for t > 0.

    Slices have H = n * rate * coth(rate * t), which sweeps (n * rate, inf).
    """

    rate: float

    def value(self, t):
        return np.sinh(self.rate * np.asarray(t, dtype=float)) / self.rate

    def d1(self, t):
        return np.cosh(self.rate * np.asarray(t, dtype=float))

    def d2(self, t):
        return self.rate * np.sinh(self.rate * np.asarray(t, dtype=float))

    def is_positive_on(self, t_min, t_max):
        return self.rate > 0 and t_min >= 0.0

    def inverse_integral(self, t1, t0):
        r = self.rate
        upper = 0.0 if math.isinf(t0) else math.log(math.tanh(0.5 * r * t0))
        return upper - math.log(math.tanh(0.5 * r * t1))

    def integral(self, t1, t0):
        r = self.rate
        if math.isinf(t0):
            return math.inf
        return (math.cosh(r * t0) - math.cosh(r * t1)) / r**2

    def to_dict(self):
        return {"type": "sinh", "rate": self.rate}


# --------------------------------------------------------------------------
# model


@dataclass(frozen=True)
class FiberSpec:
    dim: int
    period: float
    law: object

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ModelError(f"fiber dim must be a positive integer, got {self.dim!r}")
        if not self.period > 0:
            raise ModelError(f"fiber period must be positive, got {self.period!r}")


@dataclass(frozen=True)
class MultiWarpedSpacetime:
    """Interval times a product of flat tori, with cosmological parameter ``lam``.

    ``lam`` is the normalized constant entering ``Ric(X, X) >= -n*lam``.
    The temporal function is the coordinate t itself, so the lapse is 1.
    """

    fibers: tuple
    t_min: float = 0.0
    t_max: float = math.inf
    lam: float = 0.0
    _coord_fiber: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "fibers", tuple(self.fibers))
        if not self.fibers:
            raise ModelError("model needs at least one fiber")
        if not self.t_min < self.t_max:
            raise ModelError(f"t_min={self.t_min} must be below t_max={self.t_max}")
        if self.lam < 0:
            raise ModelError(f"lambda must be nonnegative, got {self.lam}")
        for i, f in enumerate(self.fibers):
            if not f.law.is_positive_on(self.t_min, self.t_max):
                raise ModelError(f"warping of fiber {i} is not positive on the model interval")
        coord = tuple(i for i, f in enumerate(self.fibers) for _ in range(f.dim))
        object.__setattr__(self, "_coord_fiber", coord)

    @property
    def n(self) -> int:
        return len(self._coord_fiber)

    @property
    def coord_fiber(self):
        """Fiber index of every spatial coordinate."""
        return self._coord_fiber

    @property
    def coord_periods(self):
        return tuple(self.fibers[i].period for i in self._coord_fiber)

    def contains(self, t) -> bool:
        t = np.asarray(t, dtype=float)
        return bool(np.all((t > self.t_min) & (t < self.t_max)))

    def require(self, t):
        if not self.contains(t):
            raise DomainError(f"t outside the model interval ({self.t_min}, {self.t_max})")

    def warp(self, t, order: int = 2):
        """Per-coordinate (a, a', a'') stacked on a leading axis of length n.

        ``order=1`` skips a'' and returns only (a, a').
        """
        t = np.asarray(t, dtype=float)
        idx = list(self._coord_fiber)
        laws = [f.law for f in self.fibers]
        a = np.stack([law.value(t) for law in laws])[idx]
        da = np.stack([law.d1(t) for law in laws])[idx]
        if order == 1:
            return a, da
        dda = np.stack([law.d2(t) for law in laws])[idx]
        return a, da, dda

    def slice_mean_curvature(self, t):
        """H of the constant-t slice w.r.t. the future normal: sum of a'/a."""
        a, da, _ = self.warp(t)
        return np.sum(da / a, axis=0)

    def metric(self, x):
        """Full (n+1)x(n+1) metric at coordinates x = (t, x^1, ..., x^n)."""
        a, _, _ = self.warp(x[0])
        return np.diag(np.concatenate(([-1.0], a**2)))


# --------------------------------------------------------------------------
# curvature


@dataclass(frozen=True)
class RicciDiagonal:
    t: float
    r0: float
    r: tuple  # one spatial eigenvalue per fiber


def _frame_ricci(M, t):
    """Per-coordinate frame Ricci eigenvalues (r0, r_k) for the diagonal metric."""
    a, da, dda = M.warp(t)
    hub = da / a
    acc = dda / a
    r0 = -np.sum(acc, axis=0)
    rk = acc + hub * (np.sum(hub, axis=0) - hub)
    return r0, rk


def ricci_diagonal(M: MultiWarpedSpacetime, t: float) -> RicciDiagonal:
    """Closed-form Ricci eigenvalues in the orthonormal frame.

    r_0 = -sum_k a_k''/a_k and, along a unit direction of coordinate k,
    r_k = a_k''/a_k + (a_k'/a_k) * sum_{j != k} a_j'/a_j.
    """
    M.require(t)
    r0, rk = _frame_ricci(M, float(t))
    first = {}
    for k, i in enumerate(M.coord_fiber):
        first.setdefault(i, float(rk[k]))
    return RicciDiagonal(float(t), float(r0), tuple(first[i] for i in range(len(M.fibers))))


def numerical_ricci(metric_fn, x, h):
    """Coordinate Ricci tensor of an arbitrary metric by nested central differences.

    ``metric_fn(x)`` returns the full metric matrix.  Christoffel symbols are
    built from first differences of the metric samples; their derivatives are
    again central differences of Christoffel symbols at shifted points.
    """
    x = np.asarray(x, dtype=float)
    dim = x.size
    eye = np.eye(dim)

    def christoffel(y):
        g = metric_fn(y)
        dg = np.stack([(metric_fn(y + h * eye[c]) - metric_fn(y - h * eye[c])) / (2 * h)
                       for c in range(dim)])  # dg[c, a, b] = d_c g_ab
        ginv = np.linalg.inv(g)
        lower = 0.5 * (np.einsum("bdc->dbc", dg) + np.einsum("cdb->dbc", dg) - dg)
        # lower[d, b, c] = 1/2 (d_b g_dc + d_c g_db - d_d g_bc)
        return np.einsum("ad,dbc->abc", ginv, lower)

    gam = christoffel(x)
    dgam = np.stack([(christoffel(x + h * eye[c]) - christoffel(x - h * eye[c])) / (2 * h)
                     for c in range(dim)])  # dgam[c, a, b, e] = d_c Gamma^a_be
    ric = (np.einsum("aabd->bd", dgam)
           - np.einsum("daba->bd", dgam)
           + np.einsum("aae,ebd->bd", gam, gam)
           - np.einsum("ade,eba->bd", gam, gam))
    return ric


def fd_ricci_diagonal(M: MultiWarpedSpacetime, t: float, rel_step: float = 2e-3) -> RicciDiagonal:
    """Frame Ricci eigenvalues from metric samples only (Richardson-extrapolated)."""
    M.require(t)
    x = np.zeros(M.n + 1)
    x[0] = t
    h = rel_step * max(abs(t), 1e-3)
    coarse = numerical_ricci(M.metric, x, h)
    fine = numerical_ricci(M.metric, x, h / 2)
    ric = (4 * fine - coarse) / 3
    a, _, _ = M.warp(t)
    diag = np.diag(ric)
    rk = diag[1:] / a**2
    first = {}
    for k, i in enumerate(M.coord_fiber):
        first.setdefault(i, float(rk[k]))
    return RicciDiagonal(float(t), float(diag[0]), tuple(first[i] for i in range(len(M.fibers))))


def ric_on_frame_vectors(M: MultiWarpedSpacetime, t: float, X) -> np.ndarray:
    """Ric(X, X) for frame-component vectors X of shape (..., n+1)."""
    r0, rk = _frame_ricci(M, float(t))
    X = np.asarray(X, dtype=float)
    return r0 * X[..., 0] ** 2 + np.sum(rk * X[..., 1:] ** 2, axis=-1)


@dataclass
class EnergyReport:
    passed: bool
    lam: float
    worst_margin: float
    worst_t: float
    worst_kind: str  # "timelike" (r0 + n lam) or "mixed:<fiber>" (r0 + r_i)
    inf_ric_plus: float  # min over samples of inf_X Ric(X,X) + n lam (-inf if unbounded)

    def to_dict(self):
        d = dict(self.__dict__)
        d["inf_ric_plus"] = _json_float(self.inf_ric_plus)
        return d


def check_energy_condition(M: MultiWarpedSpacetime, lam: float, t_samples) -> EnergyReport:
    """Check Ric(X, X) >= -n*lam for every unit timelike X at every sample.

    For a diagonal Ricci tensor the boost family X = cosh(phi) e_0 + sinh(phi) e_i
    gives Ric(X, X) = r_0 + sinh(phi)^2 (r_0 + r_i), so the condition is
    equivalent to r_0 >= -n*lam together with r_0 + r_i >= 0 for all i.
    The reported margin is the smallest of these quantities.
    """
    t_samples = np.atleast_1d(np.asarray(t_samples, dtype=float))
    if t_samples.size == 0:
        raise ValueError("t_samples must be nonempty")
    M.require(t_samples)
    n = M.n
    worst = (math.inf, math.nan, "")
    inf_ric = math.inf
    for t in t_samples:
        ric = ricci_diagonal(M, t)
        cands = [(ric.r0 + n * lam, "timelike")]
        cands += [(ric.r0 + ri, f"mixed:{i}") for i, ri in enumerate(ric.r)]
        for m, kind in cands:
            if m < worst[0]:
                worst = (m, float(t), kind)
        mixed_ok = all(ric.r0 + ri >= 0 for ri in ric.r)
        inf_ric = min(inf_ric, ric.r0 + n * lam if mixed_ok else -math.inf)
    return EnergyReport(worst[0] >= 0, float(lam), float(worst[0]), worst[1], worst[2], inf_ric)


def geodesic_rhs(M: MultiWarpedSpacetime):
    """Right-hand side of the affine geodesic equation.

    State is (t, x^1..x^n, t', x'^1..x'^n); nonzero Christoffel symbols are
    Gamma^t_kk = a_k a_k' and Gamma^k_tk = a_k'/a_k.
    """
    n = M.n

    def rhs(_, y):
        t = y[0]
        vt = y[n + 1]
        vx = y[n + 2:]
        a, da, _ = M.warp(t)
        acc_t = -np.sum(a * da * vx**2)
        acc_x = -2.0 * (da / a) * vt * vx
        return np.concatenate(([vt], vx, [acc_t], acc_x))

    return rhs


# --------------------------------------------------------------------------
# JSON model files


def _json_float(x):
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _law_from_dict(d, where):
    if not isinstance(d, dict):
        raise ModelError(f"{where}: expected an object")
    kind = d.get("type")
    try:
        if kind == "power":
            return PowerLaw(float(d["p"]))
        if kind == "exponential":
            return Exponential(float(d["rate"]))
        if kind == "constant":
            return Constant(float(d["value"]))
        if kind == "sinh":
            return Sinh(float(d["rate"]))
    except KeyError as exc:
        raise ModelError(f"{where}: missing key {exc.args[0]!r}") from None
    except (TypeError, ValueError):
        raise ModelError(f"{where}: non-numeric parameter") from None
    raise ModelError(f"{where}.type: unknown warping law {kind!r}")


def model_from_dict(d) -> MultiWarpedSpacetime:
    if not isinstance(d, dict):
        raise ModelError("model: expected a JSON object")
    if "fibers" not in d:
        raise ModelError("model: missing key 'fibers'")
    if not isinstance(d["fibers"], list):
        raise ModelError("fibers: expected a list")
    fibers = []
    for i, fd in enumerate(d["fibers"]):
        where = f"fibers[{i}]"
        if not isinstance(fd, dict):
            raise ModelError(f"{where}: expected an object")
        for key in ("dim", "period", "law"):
            if key not in fd:
                raise ModelError(f"{where}: missing key {key!r}")
        try:
            dim = int(fd["dim"])
            period = float(fd["period"])
        except (TypeError, ValueError):
            raise ModelError(f"{where}: dim/period must be numeric") from None
        fibers.append(FiberSpec(dim, period, _law_from_dict(fd["law"], f"{where}.law")))
    try:
        t_min = d.get("t_min", 0.0)
        t_min = -math.inf if t_min is None else float(t_min)
    except (TypeError, ValueError):
        raise ModelError("t_min: must be a number or null") from None
    t_max = d.get("t_max")
    try:
        t_max = math.inf if t_max is None else float(t_max)
    except (TypeError, ValueError):
        raise ModelError("t_max: must be a number or null") from None
    try:
        lam = float(d.get("lambda", 0.0))
    except (TypeError, ValueError):
        raise ModelError("lambda: must be a number") from None
    return MultiWarpedSpacetime(tuple(fibers), t_min, t_max, lam)


def model_to_dict(M: MultiWarpedSpacetime) -> dict:
    return {
        "t_min": None if math.isinf(M.t_min) else M.t_min,
        "t_max": None if math.isinf(M.t_max) else M.t_max,
        "lambda": M.lam,
        "fibers": [{"dim": f.dim, "period": f.period, "law": f.law.to_dict()} for f in M.fibers],
    }


BUILTIN_DIR = Path(__file__).with_name("models")


def load_model(path) -> MultiWarpedSpacetime:
    """Load a model JSON file; bare names fall back to the bundled models."""
    p = Path(path)
    if not p.exists():
        stem = p.name if p.suffix == ".json" else p.name + ".json"
        if (BUILTIN_DIR / stem).exists():
            p = BUILTIN_DIR / stem
    try:
        text = p.read_text()
    except OSError as exc:
        raise ModelError(f"cannot read model file {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"model JSON parse error at line {exc.lineno}: {exc.msg}") from None
    return model_from_dict(data)
