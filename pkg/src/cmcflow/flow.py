"""Forced mean curvature flow of graphs: dF/ds = (H - c) nu.

Along the moving points the height obeys du/ds = (H - c) v.  On a fixed grid
the same geometric flow reads du/ds = (H - c) / v, because the normal also
carries each point sideways; that Eulerian form is what is integrated here.
"""
from __future__ import annotations

import csv
import json
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from .errors import GeometryError, NumericError
from .hypersurface import GraphSurface, PeriodicGrid, flow_fields, mean_curvature
from .spacetime import model_from_dict, model_to_dict

__all__ = [
    "Verdict",
    "FlowConfig",
    "FlowState",
    "FlowResult",
    "BarrierReport",
    "SpacelikenessLost",
    "SERIES_COLUMNS",
    "time_step",
    "initial_state",
    "flow_step",
    "flow_run",
    "barrier_monitor",
    "write_series_csv",
    "run_to_dict",
    "load_run",
]

SERIES_COLUMNS = ("step", "s", "ds", "minH", "maxH", "maxv", "minu", "maxu", "residual")


class Verdict(str, Enum):
    CONVERGED = "Converged"
    MAX_STEPS = "MaxSteps"
    BARRIER = "BarrierViolation"
    SPACELIKE = "SpacelikenessLost"
    COMPLETED = "Completed"  # fixed-horizon run reached s_end


class SpacelikenessLost(GeometryError):
    pass


@dataclass
class FlowConfig:
    c: float
    cfl: float | None = None  # None: 0.45 / d, inside the explicit stability limit
    ds_max: float = 0.05
    tol_H: float = 1e-6
    max_steps: int = 500_000
    barrier_lower: float | None = None
    barrier_upper: float | None = None
    sample_every: int = 100
    snapshot_every: int = 0  # 0 disables (u_{k-m}, u_k, u_{k+m}) snapshots
    snapshot_stride: int = 1  # m: steps between the three heights of a snapshot
    scheme: str = "rk2"
    s_end: float | None = None  # integrate to exactly this s, ignoring tol_H

    def __post_init__(self):
        if self.cfl is not None and not 0 < self.cfl < 1:
            raise ValueError("cfl must lie in (0, 1)")
        if self.ds_max <= 0 or self.tol_H <= 0 or self.max_steps < 1:
            raise ValueError("ds_max, tol_H and max_steps must be positive")
        if (self.barrier_lower is not None and self.barrier_upper is not None
                and not self.barrier_lower < self.barrier_upper):
            raise ValueError("barrier_lower must be below barrier_upper")
        if self.scheme not in ("euler", "rk2"):
            raise ValueError("scheme must be 'euler' or 'rk2'")
        if self.snapshot_every < 0 or self.snapshot_stride < 1:
            raise ValueError("snapshot_every must be >= 0 and snapshot_stride >= 1")
        if self.s_end is not None and not self.s_end > 0:
            raise ValueError("s_end must be positive")

    @property
    def barrier_slack(self) -> float:
        return 10.0 * self.tol_H * self.ds_max


@dataclass
class FlowState:
    s: float
    step: int
    surface: GraphSurface
    H: np.ndarray
    v: np.ndarray
    ds: float = 0.0
    P: float = math.nan  # parabolicity factor of this surface

    def residual(self, c) -> float:
        return float(np.max(np.abs(self.H - c)))

    def diagnostics(self) -> dict:
        u = self.surface.u
        return {"minH": float(self.H.min()), "maxH": float(self.H.max()),
                "maxv": float(self.v.max()), "minu": float(u.min()), "maxu": float(u.max())}

    def row(self, c) -> tuple:
        d = self.diagnostics()
        return (self.step, self.s, self.ds, d["minH"], d["maxH"], d["maxv"],
                d["minu"], d["maxu"], self.residual(c))


@dataclass
class BarrierReport:
    ok: bool
    index: tuple | None = None
    side: str | None = None
    amount: float = 0.0


@dataclass
class FlowResult:
    verdict: Verdict
    final: FlowState
    series: list
    snapshots: list = field(default_factory=list)
    barrier: BarrierReport | None = None
    parabolicity: float = math.nan  # largest P seen, for the run report
    message: str = ""


def barrier_monitor(state: FlowState, t1, t2, slack: float = 0.0) -> BarrierReport:
    """First grid point with u < t1 - slack or u > t2 + slack."""
    u = state.surface.u
    flat = u.ravel()
    bad = np.zeros(flat.shape, dtype=bool)
    if t1 is not None:
        bad |= flat < t1 - slack
    if t2 is not None:
        bad |= flat > t2 + slack
    if not bad.any():
        return BarrierReport(True)
    i = int(np.argmax(bad))
    idx = tuple(int(j) for j in np.unravel_index(i, u.shape))
    if t1 is not None and flat[i] < t1 - slack:
        return BarrierReport(False, idx, "lower", float(t1 - flat[i]))
    return BarrierReport(False, idx, "upper", float(flat[i] - t2))


def time_step(M, state: FlowState, cfg: FlowConfig) -> float:
    """min(ds_max, cfl * dx_min^2 / P), P = max lambda_max(h^{jk}) * max(1, v^2)."""
    cfl = cfg.cfl if cfg.cfl is not None else 0.45 / state.surface.grid.d
    dx = min(state.surface.grid.spacing)
    return min(cfg.ds_max, cfl * dx * dx / state.P)


def _fields(M, S):
    try:
        H, v, P, ok, idx = flow_fields(M, S)
    except GeometryError as exc:
        raise SpacelikenessLost(str(exc), getattr(exc, "index", None)) from None
    if not ok:
        idx = tuple(int(i) for i in np.unravel_index(idx, S.grid.shape))
        raise SpacelikenessLost(f"induced metric nearly degenerate at grid point {idx}", idx)
    return H, v, P


def initial_state(M, S0: GraphSurface) -> FlowState:
    H, v, P = _fields(M, S0)
    return FlowState(0.0, 0, S0, H, v, 0.0, P)


def flow_step(M, state: FlowState, cfg: FlowConfig, ds: float | None = None) -> FlowState:
    """Advance one step of du/ds = (H - c)/v (Heun's method unless scheme='euler')."""
    if ds is None:
        ds = time_step(M, state, cfg)
    S = state.surface
    k1 = (state.H - cfg.c) / state.v
    if cfg.scheme == "euler":
        u_new = S.u + ds * k1
    else:
        try:
            H1, v1 = mean_curvature(M, S.with_u(S.u + ds * k1))
        except GeometryError as exc:
            raise SpacelikenessLost(str(exc), getattr(exc, "index", None)) from None
        u_new = S.u + 0.5 * ds * (k1 + (H1 - cfg.c) / v1)
    if not np.all(np.isfinite(u_new)):
        raise NumericError(f"non-finite heights after step {state.step + 1}")
    new = S.with_u(u_new)
    H, v, P = _fields(M, new)
    return FlowState(state.s + ds, state.step + 1, new, H, v, ds, P)


def flow_run(M, S0: GraphSurface, cfg: FlowConfig) -> FlowResult:
    """Iterate flow_step until max|H - c| < tol_H or another verdict is reached."""
    t1, t2 = cfg.barrier_lower, cfg.barrier_upper
    if t1 is not None and not t1 < S0.u.min():
        raise ValueError(f"initial surface must lie above the lower barrier {t1}")
    if t2 is not None and not S0.u.max() < t2:
        raise ValueError(f"initial surface must lie below the upper barrier {t2}")
    state = initial_state(M, S0)
    series = [state.row(cfg.c)]
    snapshots = []
    pending = []  # snapshots waiting for their u_next
    m = cfg.snapshot_stride
    recent = deque([(state.s, state.surface.u)], maxlen=m + 1) if cfg.snapshot_every else None
    p_max = 0.0
    check_barriers = t1 is not None or t2 is not None

    def finish(verdict, barrier=None, message=""):
        if series[-1][0] != state.step:
            series.append(state.row(cfg.c))
        return FlowResult(verdict, state, series, snapshots, barrier, p_max, message)

    while True:
        if check_barriers:
            rep = barrier_monitor(state, t1, t2, cfg.barrier_slack)
            if not rep.ok:
                return finish(Verdict.BARRIER, rep)
        ok_barrier = BarrierReport(True) if check_barriers else None
        if cfg.s_end is None:
            if state.residual(cfg.c) < cfg.tol_H:
                return finish(Verdict.CONVERGED, ok_barrier)
        elif state.s >= cfg.s_end:
            return finish(Verdict.COMPLETED, ok_barrier)
        if state.step >= cfg.max_steps:
            return finish(Verdict.MAX_STEPS)
        ds = time_step(M, state, cfg)
        last = False
        if cfg.s_end is not None:
            rest = cfg.s_end - state.s
            if rest <= ds:
                ds, last = rest, True
            elif rest < 2 * ds:
                ds = 0.5 * rest  # two equal steps instead of a sliver
        p_max = max(p_max, state.P)
        try:
            new = flow_step(M, state, cfg, ds)
        except SpacelikenessLost as exc:
            return finish(Verdict.SPACELIKE, message=str(exc))
        if last:
            new.s = cfg.s_end
        state = new
        if recent is not None:
            recent.append((state.s, state.surface.u))
            while pending and pending[0]["step"] + m == state.step:
                snap = pending.pop(0)
                snap["u_next"] = state.surface.u.copy()
                snap["ds_next"] = state.s - snap["s"]
                snapshots.append(snap)
            if state.step % cfg.snapshot_every == 0 and state.step >= m:
                s_prev, u_prev = recent[0]
                pending.append({"step": state.step, "s": state.s, "ds_prev": state.s - s_prev,
                                "u_prev": u_prev.copy(), "u": state.surface.u.copy()})
        if state.step % cfg.sample_every == 0:
            series.append(state.row(cfg.c))


def write_series_csv(path, series) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SERIES_COLUMNS)
        for row in series:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def run_to_dict(M, cfg: FlowConfig, result: FlowResult) -> dict:
    """JSON-ready record of a run, snapshots included, for later post-processing."""
    grid = result.final.surface.grid

    def arr(a):
        return np.asarray(a).tolist()

    snaps = [{k: (arr(v) if isinstance(v, np.ndarray) else v) for k, v in snap.items()}
             for snap in result.snapshots]
    return {
        "model": model_to_dict(M),
        "config": asdict(cfg),
        "grid": {"shape": list(grid.shape), "periods": list(grid.periods)},
        "verdict": result.verdict.value,
        "message": result.message,
        "steps": result.final.step,
        "s": result.final.s,
        "residual": result.final.residual(cfg.c),
        "parabolicity": result.parabolicity,
        "barrier": None if result.barrier is None else asdict(result.barrier),
        "snapshots": snaps,
    }


def load_run(path):
    """(model, grid, record) from a file written with run_to_dict."""
    with open(path) as fh:
        rec = json.load(fh)
    for key in ("model", "grid", "snapshots"):
        if key not in rec:
            raise ValueError(f"run record lacks {key!r}")
    M = model_from_dict(rec["model"])
    grid = PeriodicGrid(tuple(rec["grid"]["shape"]), tuple(rec["grid"]["periods"]))
    return M, grid, rec
