"""Stability operator of a graph surface and the positive-mean-curvature push.

L phi = -Delta phi + (Ric(nu, nu) + H^2/n + sigma^2) phi, where the potential
equals Ric(nu, nu) + |A|^2.  The discrete Laplacian is in divergence form, so
L is self-adjoint for the weighted product <f, g> = sum sqrt(det h) f g.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NumericError, PerturbationError
from .hypersurface import GraphSurface, induced_geometry, laplacian_matrix, mean_curvature

__all__ = [
    "EigenResult",
    "stability_potential",
    "stability_matrix",
    "stability_apply",
    "weighted_inner",
    "rayleigh_quotient",
    "principal_eigen",
    "normal_variation",
    "perturb_to_positive",
]


@dataclass
class EigenResult:
    lambda1: float
    phi1: np.ndarray  # normalized so that max phi1 = 1
    iterations: int
    residual: float
    shift: float
    rayleigh_history: list = field(default_factory=list)

    @property
    def rayleigh_min(self) -> float:
        return min(self.rayleigh_history) if self.rayleigh_history else self.lambda1


def stability_potential(M, S):
    geo = induced_geometry(M, S)
    return geo.ric_nu + geo.A2


def stability_matrix(M, S):
    """Sparse matrix of L acting on flattened fields, and the weights sqrt(det h)."""
    K, w = laplacian_matrix(M, S)
    V = stability_potential(M, S)
    L = sp.diags(1.0 / w.ravel()) @ K + sp.diags(V.ravel())
    return L.tocsr(), w


def stability_apply(M, S: GraphSurface, phi) -> np.ndarray:
    L, _ = stability_matrix(M, S)
    phi = np.asarray(phi, dtype=float)
    return (L @ phi.ravel()).reshape(phi.shape)


def weighted_inner(w, f, g) -> float:
    return float(np.sum(w * f * g))


def rayleigh_quotient(M, S, phi) -> float:
    L, w = stability_matrix(M, S)
    phi = np.asarray(phi, dtype=float)
    Lphi = (L @ phi.ravel()).reshape(phi.shape)
    return weighted_inner(w, phi, Lphi) / weighted_inner(w, phi, phi)


def _gershgorin_lower(L):
    L = L.tocsr()
    diag = L.diagonal()
    absrow = np.asarray(abs(L).sum(axis=1)).ravel()
    return float(np.min(diag - (absrow - np.abs(diag))))


def principal_eigen(M, S, tol: float = 1e-11, max_iter: int = 1000) -> EigenResult:
    """Smallest eigenpair of the discrete L by shifted inverse iteration.

    The shift sits below the Gershgorin lower bound so that L - shift is
    positive definite and the iteration converges to the bottom of the spectrum.
    Iterates are kept in the symmetrised variable psi = sqrt(w) phi.
    """
    L, w = stability_matrix(M, S)
    size = L.shape[0]
    gersh = _gershgorin_lower(L)
    shift = gersh - 1e-3 * max(1.0, abs(gersh))
    sw = np.sqrt(w.ravel())
    B = sp.diags(sw) @ L @ sp.diags(1.0 / sw)
    B = 0.5 * (B + B.T)
    solve = spla.splu((B - shift * sp.identity(size)).tocsc()).solve

    psi = sw.copy()
    psi /= np.linalg.norm(psi)
    history = []
    lam = np.nan
    residual = np.inf
    for it in range(1, max_iter + 1):
        psi = solve(psi)
        psi /= np.linalg.norm(psi)
        lam = float(psi @ (B @ psi))
        history.append(lam)
        phi = psi / sw
        phi = phi / phi[np.argmax(np.abs(phi))]
        residual = float(np.max(np.abs(L @ phi - lam * phi)))
        if residual <= tol * max(1.0, abs(lam)):
            break
    else:
        raise NumericError(f"inverse iteration did not converge: residual {residual:.3e}")
    if phi.min() <= 0:
        raise NumericError("principal eigenfunction is not positive")
    return EigenResult(lam, phi.reshape(S.grid.shape), it, residual, shift, history)


def normal_variation(M, S: GraphSurface, phi, t: float) -> GraphSurface:
    """Graph obtained by moving S a distance t*phi along its future unit normal.

    To first order, the height above a fixed base point changes by t*phi/v:
    the normal also slides the point sideways by t*phi*nu^k.
    """
    _, v = mean_curvature(M, S)
    return S.with_u(S.u + t * np.asarray(phi) / v)


def perturb_to_positive(M, S: GraphSurface, eps: float, tol: float = 1e-10,
                        max_halvings: int = 40, eig: EigenResult | None = None) -> GraphSurface:
    """Push S slightly to the past along -phi1 * nu until min H > 0.

    The first-order change of H is eps * L phi1 = eps * lambda1 * phi1 > 0.
    ``eps`` is halved until the recomputed mean curvature is strictly positive.
    """
    if eps == 0:
        return S
    H0, _ = mean_curvature(M, S)
    if H0.min() < -tol:
        raise PerturbationError(f"initial surface has min H = {H0.min():.3e} < 0")
    eig = principal_eigen(M, S) if eig is None else eig
    if not eig.lambda1 > 0:
        raise PerturbationError(f"principal eigenvalue {eig.lambda1:.3e} is not positive")
    trace = []
    for _ in range(max_halvings + 1):
        try:
            cand = normal_variation(M, S, -eig.phi1, eps)
            H, _ = mean_curvature(M, cand)
            trace.append((eps, float(H.min())))
            if H.min() > 0:
                return cand
        except Exception as exc:  # left the model or lost spacelikeness
            trace.append((eps, repr(exc)))
        eps *= 0.5
    raise PerturbationError("no step size produced min H > 0", trace)
