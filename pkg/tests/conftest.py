import math

import numpy as np
import pytest
from scipy.optimize import brentq

from cmcflow.hypersurface import GraphSurface, PeriodicGrid, mean_curvature
from cmcflow.spacetime import (Constant, Exponential, FiberSpec, MultiWarpedSpacetime, PowerLaw,
                               Sinh, load_model)


def power_model(exponents, period=5.0, dims=None, **kw):
    dims = dims or [1] * len(exponents)
    return MultiWarpedSpacetime(tuple(FiberSpec(d, period, PowerLaw(p)) for d, p in zip(dims, exponents)), **kw)


@pytest.fixture(scope="session")
def example():
    return load_model("paper_example")


@pytest.fixture(scope="session")
def flrw():
    return load_model("flrw_linear")


@pytest.fixture(scope="session")
def de_sitter():
    return load_model("de_sitter")


@pytest.fixture(scope="session")
def de_sitter_hyp():
    return load_model("de_sitter_hyperbolic")


@pytest.fixture(scope="session")
def minkowski():
    return MultiWarpedSpacetime((FiberSpec(3, math.pi, Constant(1.0)),), t_min=-math.inf)


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def smooth_field(grid, rng, modes=3, amp=1.0):
    """Random low-frequency periodic field on the grid."""
    X = grid.mesh()
    f = np.zeros(grid.shape)
    for _ in range(modes):
        phase = rng.uniform(0, 2 * np.pi)
        arg = sum(rng.integers(0, 3) * np.pi * x / b for x, b in zip(X, grid.periods))
        f += rng.normal() * np.cos(arg + phase)
    return amp * f


def zero_touching_surface(M, N=256, base=4.0, k=5):
    """A height bump whose crest has H = 0 exactly (to root-finding precision)."""
    g = PeriodicGrid.for_model(M, N)
    shape = np.cos(k * np.pi * g.axis(0) / g.periods[0])

    def min_H(A):
        return float(mean_curvature(M, GraphSurface(g, base + A * shape))[0].min())

    A = brentq(min_H, 0.3, 0.8, xtol=1e-15)
    return GraphSurface(g, base + A * shape)


__all__ = ["power_model", "smooth_field", "zero_touching_surface", "Exponential", "Sinh"]
