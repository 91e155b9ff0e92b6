"""Spacelike graphs t = u(x) over the periodic spatial torus.

A grid resolves the first ``d`` spatial coordinates of the model (d <= 3);
the remaining coordinates are symmetry directions along which u is constant.
All derivatives are second-order centered differences with periodic wrap.
"""
from __future__ import annotations

import re
from functools import lru_cache
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import GeometryError

__all__ = [
    "PeriodicGrid",
    "GraphSurface",
    "SurfaceGeometry",
    "SpacelikeReport",
    "induced_geometry",
    "mean_curvature",
    "mean_curvature_divergence",
    "spacelike_check",
    "metric_data",
    "laplacian_matrix",
    "gradient",
    "flow_fields",
    "write_surface_csv",
    "read_surface_csv",
]

SPACELIKE_TOL = 1e-6


@dataclass(frozen=True)
class PeriodicGrid:
    shape: tuple
    periods: tuple

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(N) for N in self.shape))
        object.__setattr__(self, "periods", tuple(float(b) for b in self.periods))
        if not 1 <= len(self.shape) <= 3:
            raise ValueError("grid dimension must be 1, 2 or 3")
        if len(self.periods) != len(self.shape):
            raise ValueError("need one period per grid axis")
        if any(N < 3 for N in self.shape) or any(b <= 0 for b in self.periods):
            raise ValueError("grid needs N >= 3 and positive periods on every axis")

    @classmethod
    def for_model(cls, M, shape):
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        if len(shape) > M.n:
            raise ValueError(f"grid has {len(shape)} axes but the model has n={M.n}")
        return cls(shape, M.coord_periods[: len(shape)])

    @property
    def d(self) -> int:
        return len(self.shape)

    @property
    def spacing(self):
        return tuple(2.0 * b / N for b, N in zip(self.periods, self.shape))

    def axis(self, k):
        b, N = self.periods[k], self.shape[k]
        return -b + np.arange(N) * (2.0 * b / N)

    def mesh(self):
        return np.meshgrid(*(self.axis(k) for k in range(self.d)), indexing="ij")


@dataclass(frozen=True)
class GraphSurface:
    grid: PeriodicGrid
    u: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        if u.shape != self.grid.shape:
            raise ValueError(f"height field shape {u.shape} != grid shape {self.grid.shape}")
        object.__setattr__(self, "u", u)

    def with_u(self, u):
        return GraphSurface(self.grid, u)


@dataclass
class SurfaceGeometry:
    H: np.ndarray
    v: np.ndarray
    A2: np.ndarray
    sigma2: np.ndarray
    ric_nu: np.ndarray


@dataclass
class SpacelikeReport:
    ok: bool
    margin: float  # smallest eigenvalue of the induced metric on the grid
    threshold: float
    index: tuple


# --------------------------------------------------------------------------
# finite differences


def _check_model(M, S):
    d = S.grid.d
    if d > M.n:
        raise ValueError(f"grid has {d} axes but the model has n={M.n}")
    if any(abs(b - c) > 1e-12 * c for b, c in zip(S.grid.periods, M.coord_periods[:d])):
        raise ValueError("grid periods do not match the model fibers")


@lru_cache(maxsize=64)
def _wrap_index(N, shift):
    return (np.arange(N) + shift) % N


def _sh(f, shift, axis):
    """Periodic shift: result[i] = f[i + shift] along ``axis``."""
    return np.take(f, _wrap_index(f.shape[axis], shift), axis=axis)


def gradient(grid, f, n=None):
    """Centered gradient, shape (*grid.shape, n); unresolved slots are zero."""
    n = grid.d if n is None else n
    out = np.zeros(grid.shape + (n,))
    for k, h in enumerate(grid.spacing):
        out[..., k] = (_sh(f, 1, k) - _sh(f, -1, k)) / (2 * h)
    return out


def _second(u, dx, j, k):
    if j == k:
        return (_sh(u, 1, j) - 2 * u + _sh(u, -1, j)) / dx[j] ** 2
    up, um = _sh(u, 1, j), _sh(u, -1, j)
    return ((_sh(up, 1, k) - _sh(up, -1, k) - _sh(um, 1, k) + _sh(um, -1, k))
            / (4 * dx[j] * dx[k]))


def _hessian(grid, u, n):
    out = np.zeros(grid.shape + (n, n))
    dx = grid.spacing
    for j in range(grid.d):
        for k in range(j, grid.d):
            out[..., j, k] = out[..., k, j] = _second(u, dx, j, k)
    return out


def _warp_last(M, u):
    a, da, dda = M.warp(u)
    return np.moveaxis(a, 0, -1), np.moveaxis(da, 0, -1), np.moveaxis(dda, 0, -1)


def _spacelike_or_raise(M, S, grad, G):
    W2 = 1.0 - np.sum(grad**2 / G[..., : grad.shape[-1]], axis=-1)
    if not np.all(np.isfinite(W2)) or np.any(W2 <= 0):
        bad = np.where(np.isfinite(W2), W2, -np.inf)
        idx = np.unravel_index(np.argmin(bad), bad.shape)
        raise GeometryError(f"surface is not spacelike at grid point {tuple(int(i) for i in idx)}",
                            index=tuple(int(i) for i in idx), margin=float(bad[idx]))
    return W2


# --------------------------------------------------------------------------
# geometry


def _evaluate(M, S, with_margin=False):
    """Shared pass for H and v.

    Returns (H, v, Gd, grad, W2, Gu_min): Gd holds a_k^2 for the d resolved
    coordinates, Gu_min the smallest a_k^2 among unresolved ones (or None).
    """
    _check_model(M, S)
    u = S.u
    if not (u.min() > M.t_min and u.max() < M.t_max):
        raise GeometryError("surface leaves the model interval")
    d = S.grid.d
    dx = S.grid.spacing
    coord = M.coord_fiber
    per_fiber = [(f.law.value(u), f.law.d1(u)) for f in M.fibers]
    hub_sum = 0.0
    for i, f in enumerate(M.fibers):
        hub_sum = hub_sum + f.dim * (per_fiber[i][1] / per_fiber[i][0])
    Gd, hub_d, grad = [], [], []
    for k in range(d):
        a, da = per_fiber[coord[k]]
        Gd.append(a * a)
        hub_d.append(da / a)
        grad.append((_sh(u, 1, k) - _sh(u, -1, k)) / (2 * dx[k]))
    W2 = 1.0 - sum(g * g / G for g, G in zip(grad, Gd))
    if not W2.min() > 0:
        _spacelike_or_raise(M, S, np.stack(grad, axis=-1), np.stack(Gd, axis=-1))
    q = [g / G for g, G in zip(grad, Gd)]
    acc = hub_sum - sum(h * g * qq for h, g, qq in zip(hub_d, grad, q)) / W2
    for j in range(d):
        acc = acc + (1.0 / Gd[j] + q[j] * q[j] / W2) * _second(u, dx, j, j)
        for k in range(j + 1, d):
            acc = acc + 2.0 * q[j] * q[k] / W2 * _second(u, dx, j, k)
    W = np.sqrt(W2)
    Gu_min = None
    if with_margin and M.n > d:
        for i in sorted(set(coord[d:])):
            a2 = per_fiber[i][0] ** 2
            Gu_min = a2 if Gu_min is None else np.minimum(Gu_min, a2)
    return acc / W, 1.0 / W, Gd, grad, W2, Gu_min


def mean_curvature(M, S):
    """Mean curvature H and gradient function v from the quasilinear graph operator.

    H = (1/W) [h^{jk} u_jk + sum_k (a_k'/a_k)(1 - u_k^2 / (a_k^2 W^2))],
    W^2 = 1 - sum_k u_k^2 / a_k^2, v = 1/W.
    """
    H, v, *_ = _evaluate(M, S)
    return H, v


def flow_fields(M, S, margin_tol: float = SPACELIKE_TOL):
    """H, v, the parabolicity factor and the spacelike verdict in one pass.

    The parabolicity factor is max over the grid of lambda_max(h^{jk}) * max(1, v^2)
    on the resolved block; the verdict matches :func:`spacelike_check`.
    """
    H, v, Gd, grad, W2, Gu_min = _evaluate(M, S, with_margin=True)
    d = S.grid.d
    if d == 1:
        q0 = grad[0] / Gd[0]
        lam_max = 1.0 / Gd[0] + q0 * q0 / W2
        eig = Gd[0] - grad[0] ** 2
        g_min = Gd[0].min()
    else:
        Gd = np.stack(Gd, axis=-1)
        grad = np.stack(grad, axis=-1)
        q = grad / Gd
        eye = np.eye(d)
        hinv = (np.einsum("...j,jk->...jk", 1.0 / Gd, eye)
                + q[..., :, None] * q[..., None, :] / W2[..., None, None])
        lam_max = np.linalg.eigvalsh(hinv)[..., -1]
        h = np.einsum("...j,jk->...jk", Gd, eye) - grad[..., :, None] * grad[..., None, :]
        eig = np.linalg.eigvalsh(h)[..., 0]
        g_min = Gd.min()
    if Gu_min is not None:
        eig = np.minimum(eig, Gu_min)
        g_min = min(g_min, np.min(Gu_min))
    P = float(np.max(lam_max * np.maximum(1.0, v * v)))
    margin = float(eig.min())
    ok = margin >= margin_tol * float(g_min)
    return H, v, P, ok, int(np.argmin(eig))


def mean_curvature_divergence(M, S):
    """Mean curvature as the spacetime divergence of the extended unit normal.

    The future normal nu = (1, u_k / a_k^2) / W is extended off the surface as the
    normal field of the translated graphs; its spatial divergence is taken by
    differencing nu at neighbouring nodes (metric frozen at the centre height),
    and the t-part uses the analytic Christoffel trace Gamma^a_{a t} = sum a'/a.
    """
    _check_model(M, S)
    n = M.n
    u = S.u
    a, da, _ = _warp_last(M, u)
    G = a * a
    grad = gradient(S.grid, u, n)
    W2 = _spacelike_or_raise(M, S, grad, G)
    W = np.sqrt(W2)
    div = np.zeros(u.shape)
    for k, h in enumerate(S.grid.spacing):
        comps = []
        for shift in (-1, 1):
            g_nb = np.roll(grad, shift, axis=k)
            W_nb = np.sqrt(1.0 - np.sum(g_nb**2 / G, axis=-1))
            comps.append(g_nb[..., k] / (G[..., k] * W_nb))
        div += (comps[0] - comps[1]) / (2 * h)
    dt_nu_t = -np.sum(grad**2 * da / (a * G), axis=-1) / W**3
    return div + dt_nu_t + np.sum(da / a, axis=-1) / W


def induced_geometry(M, S) -> SurfaceGeometry:
    """H, v, |A|^2, sigma^2 and Ric(nu, nu) on every grid node."""
    from .spacetime import _frame_ricci

    H, v = mean_curvature(M, S)
    n = M.n
    u = S.u
    a, da, _ = _warp_last(M, u)
    G = a * a
    grad = gradient(S.grid, u, n)
    W2 = 1.0 / v**2
    hinv = _inverse_metric(grad, G, W2)
    hub = da / a
    K = _hessian(S.grid, u, n)
    K = K + np.einsum("...j,jk->...jk", a * da, np.eye(n))
    K = K - grad[..., :, None] * grad[..., None, :] * (hub[..., :, None] + hub[..., None, :])
    K = K * v[..., None, None]
    shape_op = hinv @ K
    A2 = np.einsum("...jk,...kj->...", shape_op, shape_op)
    sigma2 = A2 - H**2 / n
    r0, rk = _frame_ricci(M, u)
    rk = np.moveaxis(rk, 0, -1)
    ric_nu = (r0 + np.sum(rk * grad**2 / G, axis=-1)) * v**2
    return SurfaceGeometry(H, v, A2, sigma2, ric_nu)


def _inverse_metric(grad, G, W2):
    n = G.shape[-1]
    q = grad / G
    return (np.einsum("...j,jk->...jk", 1.0 / G, np.eye(n))
            + q[..., :, None] * q[..., None, :] / W2[..., None, None])


def metric_data(M, S):
    """Resolved block of h^{jk}, sqrt(det h), and the spatial normal components nu^k."""
    _check_model(M, S)
    n, d = M.n, S.grid.d
    a, _, _ = _warp_last(M, S.u)
    G = a * a
    grad = gradient(S.grid, S.u, n)
    W2 = _spacelike_or_raise(M, S, grad, G)
    hinv = _inverse_metric(grad, G, W2)[..., :d, :d]
    sqrt_det = np.prod(a, axis=-1) * np.sqrt(W2)
    nu = (grad / G)[..., :d] / np.sqrt(W2)[..., None]
    return hinv, sqrt_det, nu


def spacelike_check(M, S, margin_tol: float = SPACELIKE_TOL) -> SpacelikeReport:
    """Smallest eigenvalue of h_jk = a_j^2 delta_jk - u_j u_k over the grid.

    Unresolved coordinates decouple (their block is diag(a_k^2)), so only the
    resolved d x d block needs an eigenvalue solve.
    """
    _check_model(M, S)
    d = S.grid.d
    a, _, _ = _warp_last(M, S.u)
    G = a * a
    grad = gradient(S.grid, S.u)
    if d == 1:
        eig = G[..., 0] - grad[..., 0] ** 2
    else:
        h = (np.einsum("...j,jk->...jk", G[..., :d], np.eye(d))
             - grad[..., :, None] * grad[..., None, :])
        eig = np.linalg.eigvalsh(h)[..., 0]
    if M.n > d:
        eig = np.minimum(eig, np.min(G[..., d:], axis=-1))
    eig = np.where(np.isfinite(eig), eig, -np.inf)
    idx = np.unravel_index(np.argmin(eig), eig.shape)
    margin = float(eig[idx])
    threshold = margin_tol * float(np.min(G))
    return SpacelikeReport(bool(margin >= threshold), margin, threshold,
                           tuple(int(i) for i in idx))


def laplacian_matrix(M, S):
    """Divergence-form discretisation of the induced Laplace-Beltrami operator.

    Returns (K, w) with K symmetric positive semidefinite and w = sqrt(det h), so
    that Delta phi = -(K phi) / w.  K averages the quadratic form
    sum_jk sqrt(h) h^{jk} D_j phi D_k phi over all one-sided difference
    orientations, which keeps the stencil compact and the kernel constant.
    """
    hinv, w, _ = metric_data(M, S)
    grid = S.grid
    size = int(np.prod(grid.shape))
    idx = np.arange(size).reshape(grid.shape)
    eye = sp.identity(size, format="csr")
    fwd, bwd = [], []
    for k, h in enumerate(grid.spacing):
        nxt = np.roll(idx, -1, axis=k).ravel()
        prv = np.roll(idx, 1, axis=k).ravel()
        rows = idx.ravel()
        fwd.append((sp.csr_matrix((np.ones(size), (rows, nxt)), shape=(size, size)) - eye) / h)
        bwd.append((eye - sp.csr_matrix((np.ones(size), (rows, prv)), shape=(size, size))) / h)
    K = sp.csr_matrix((size, size))
    for j in range(grid.d):
        C = sp.diags((w * hinv[..., j, j]).ravel())
        K = K + 0.5 * (fwd[j].T @ C @ fwd[j] + bwd[j].T @ C @ bwd[j])
        for k in range(j + 1, grid.d):
            C = sp.diags((w * hinv[..., j, k]).ravel())
            cj = 0.5 * (fwd[j] + bwd[j])
            ck = 0.5 * (fwd[k] + bwd[k])
            K = K + cj.T @ C @ ck + ck.T @ C @ cj
    return K.tocsr(), w


# --------------------------------------------------------------------------
# CSV


_HEADER = re.compile(r"#\s*grid:\s*([\d,\s]+);\s*periods:\s*([-\d.eE+,\s]+)")


def write_surface_csv(path, grid: PeriodicGrid, field) -> None:
    field = np.asarray(field, dtype=float)
    lines = ["# grid: " + ",".join(str(N) for N in grid.shape)
             + "; periods: " + ",".join(repr(b) for b in grid.periods)]
    for idx in np.ndindex(*grid.shape):
        lines.append(",".join(str(i) for i in idx) + "," + repr(float(field[idx])))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_surface_csv(path) -> GraphSurface:
    with open(path) as fh:
        header = fh.readline()
        m = _HEADER.match(header.strip())
        if not m:
            raise ValueError(f"{path}: missing '# grid: ...; periods: ...' header")
        shape = tuple(int(s) for s in m.group(1).split(","))
        periods = tuple(float(s) for s in m.group(2).split(","))
        grid = PeriodicGrid(shape, periods)
        u = np.full(shape, np.nan)
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != grid.d + 1:
                raise ValueError(f"{path}:{lineno}: expected {grid.d + 1} columns")
            u[tuple(int(p) for p in parts[:-1])] = float(parts[-1])
    if np.isnan(u).any():
        raise ValueError(f"{path}: missing grid values")
    return GraphSurface(grid, u)
