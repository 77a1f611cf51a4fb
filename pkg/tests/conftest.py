"""Shared fixtures; expensive forward-solver artifacts are session scoped."""

import numpy as np
import pytest

from anisodbar import (
    TrigTransform,
    build_mesh,
    builtin_phantom,
    dn_from_voltages,
    simulate_voltages,
)


def analytic_layered_dn(g1: float, radius: float, N: int = 16) -> np.ndarray:
    """Independent oracle: DN matrix of a concentric two-layer disc.

    For each trig mode the transmission problem reduces to a 3x3 linear
    system for the inner/outer harmonic coefficients; the boundary trace per
    unit current gives the ND eigenvalue, whose inverse is the DN eigenvalue.
    """
    lam = np.zeros(2 * N + 1)
    for n in range(1, N + 1):
        A = np.array(
            [
                [radius**n, -(radius**n), -(radius ** (-n))],
                [g1 * n * radius ** (n - 1), -n * radius ** (n - 1), n * radius ** (-n - 1)],
                [0.0, n, -n],
            ]
        )
        inner, b_out, c_out = np.linalg.solve(A, np.array([0.0, 0.0, 1.0]))
        lam[2 * n - 1] = lam[2 * n] = b_out + c_out
    L = np.zeros(2 * N + 1)
    L[1:] = 1.0 / lam[1:]
    return np.diag(L)


@pytest.fixture(scope="session")
def tt():
    return TrigTransform(16, 256)


@pytest.fixture(scope="session")
def mesh6():
    return build_mesh(6)


@pytest.fixture(scope="session")
def mesh8():
    return build_mesh(8)


@pytest.fixture(scope="session")
def dn_test1_level6(mesh6):
    field = builtin_phantom("test1")
    V = simulate_voltages(mesh6, field)
    return dn_from_voltages(mesh6.boundary_theta, V, meta={"phantom": "test1", "mesh_level": 6})


@pytest.fixture(scope="session")
def dn_identity8(mesh8):
    V = simulate_voltages(mesh8, builtin_phantom("identity"))
    return dn_from_voltages(mesh8.boundary_theta, V, meta={"phantom": "identity", "mesh_level": 8})
