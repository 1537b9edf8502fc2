"""Shared builders for the test suite."""
import numpy as np
import pytest

from semipot import (
    Grid,
    HelmholtzMode,
    PhysicalConstants,
    construct_stationary,
    evaluate_mode,
)


def grid_1d(n, a, b, boundary="dirichlet_zero"):
    if boundary == "periodic":
        return Grid((n,), (a,), ((b - a) / n,), boundary)
    return Grid((n,), (a,), ((b - a) / (n - 1),), boundary)


def grid_nd(n_per_axis, a, b, dim, boundary="dirichlet_zero"):
    if boundary == "periodic":
        h = (b - a) / n_per_axis
    else:
        h = (b - a) / (n_per_axis - 1)
    return Grid((n_per_axis,) * dim, (a,) * dim, (h,) * dim, boundary)


def cos_mode(lam, amplitude=1.0, phase=0.0):
    """1D plane-wave mode a*cos(lam*x + phase)."""
    return HelmholtzMode.plane_waves(lam, [[lam]], [amplitude], [phase])


def sin_mode(lam, amplitude=1.0):
    return cos_mode(lam, amplitude, -np.pi / 2.0)


@pytest.fixture
def unit_constants():
    return PhysicalConstants(1.0, 1.0)


def headline_scenario(n=512):
    """The 1D trajectory-identity scenario: R=cos x, S~=0.25 sin x, m=30."""
    grid = grid_1d(n, -1.2, 1.2)
    constants = PhysicalConstants(hbar=1.0, mass=30.0)
    R = evaluate_mode(cos_mode(1.0), grid)
    St = evaluate_mode(sin_mode(1.0, 0.25), grid)
    return construct_stationary(R, St, 0.0, 1.0, constants)


def oracle_scenario(h=0.005):
    """The construction-oracle scenario: R=cos x, S~=sin x, hbar=m=1, E=0."""
    n = int(round(2.4 / h)) + 1
    grid = grid_1d(n, -1.2, 1.2)
    constants = PhysicalConstants(1.0, 1.0)
    R = evaluate_mode(cos_mode(1.0), grid)
    St = evaluate_mode(sin_mode(1.0), grid)
    return construct_stationary(R, St, 0.0, 1.0, constants)
