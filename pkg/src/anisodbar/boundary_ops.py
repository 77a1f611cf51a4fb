"""Operator algebra on the unit-circle boundary.

Functions on the boundary are expanded in the orthonormal real trigonometric
basis

    phi_0 = (2 pi)^{-1/2},  phi_{2m-1} = cos(m theta)/sqrt(pi),
    phi_{2m} = sin(m theta)/sqrt(pi),   m = 1..N,

and complex-valued functions are carried as complex coefficient vectors of
length 2N+1 (real part coefficients + i * imaginary part coefficients).  The
boundary Hilbert transforms derived from a Dirichlet-to-Neumann matrix, the
Hardy projection, and its exponentially conjugated variant all act on these
vectors; pointwise multiplications happen on an oversampled equiangular
sample grid through :class:`TrigTransform`.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "TrigTransform",
    "build_DT",
    "identity_dn_matrix",
    "HilbertMatrices",
    "build_hilbert",
    "apply_P0",
    "apply_P",
    "apply_Pk",
]


class TrigTransform:
    """Maps between trig coefficients (length 2N+1) and boundary samples.

    The sample grid has M equiangular points; M >= 4N keeps products like
    exp(ikz) * g representable without aliasing back into the retained band,
    and the trapezoid projection is then an exact orthonormal projection for
    band-limited integrands.
    """

    def __init__(self, N: int = 16, M: int = 256):
        if M < 4 * N:
            raise ValueError("sample grid must oversample the basis (M >= 4N)")
        self.N = N
        self.M = M
        self.theta = np.arange(M) * (2.0 * np.pi / M)
        self.z = np.exp(1j * self.theta)
        Phi = np.empty((M, 2 * N + 1))
        Phi[:, 0] = 1.0 / np.sqrt(2.0 * np.pi)
        for m in range(1, N + 1):
            Phi[:, 2 * m - 1] = np.cos(m * self.theta) / np.sqrt(np.pi)
            Phi[:, 2 * m] = np.sin(m * self.theta) / np.sqrt(np.pi)
        self._Phi = Phi
        self._proj = (2.0 * np.pi / M) * Phi.T

    def to_samples(self, coeffs: np.ndarray) -> np.ndarray:
        return self._Phi @ coeffs

    def to_coeffs(self, samples: np.ndarray) -> np.ndarray:
        return self._proj @ samples

    def constant(self, value: complex = 1.0) -> np.ndarray:
        """Coefficients of the constant function ``value``."""
        c = np.zeros(2 * self.N + 1, dtype=complex)
        c[0] = value * np.sqrt(2.0 * np.pi)
        return c


def build_DT(N: int) -> np.ndarray:
    """Tangential derivative on the non-constant block: 2x2 blocks [[0, n], [-n, 0]]."""
    if N < 1:
        raise ValueError("N must be >= 1")
    D = np.zeros((2 * N, 2 * N))
    for n in range(1, N + 1):
        D[2 * n - 2, 2 * n - 1] = n
        D[2 * n - 1, 2 * n - 2] = -n
    return D


def identity_dn_matrix(N: int) -> np.ndarray:
    """Analytic Dirichlet-to-Neumann matrix for the homogeneous disc: diag(0,1,1,...,N,N)."""
    return np.diag([0.0] + [float(n) for n in range(1, N + 1) for _ in (0, 1)])


@dataclass(frozen=True)
class HilbertMatrices:
    """Boundary Hilbert transform pair derived from a DN matrix.

    ``H_sigma`` maps the trace of a potential to the trace of its conjugate;
    ``H_sigma_hat`` is its negative inverse on the zero-mean block, so the
    composition identity H_sigma_hat @ H_sigma = -I holds there by
    construction.  Both are (2N+1)x(2N+1) with zero first row and column.
    """

    H_sigma: np.ndarray
    H_sigma_hat: np.ndarray
    condition: float

    @property
    def N(self) -> int:
        return (self.H_sigma.shape[0] - 1) // 2


def build_hilbert(L: np.ndarray, max_condition: float = 1e12) -> HilbertMatrices:
    """Build the Hilbert transform pair from a DN matrix in the trig basis."""
    L = np.asarray(L, dtype=float)
    n = L.shape[0]
    if L.shape != (n, n) or n % 2 == 0:
        raise ValueError("DN matrix must be square of odd size 2N+1")
    N = (n - 1) // 2
    Ht = np.linalg.solve(build_DT(N), L[1:, 1:])
    cond = np.linalg.cond(Ht)
    if not np.isfinite(cond) or cond > max_condition:
        raise np.linalg.LinAlgError(
            f"degenerate DN data: tangential Hilbert block has condition {cond:.3e}"
        )
    Hs = np.zeros((n, n))
    Hs[1:, 1:] = Ht
    Hh = np.zeros((n, n))
    Hh[1:, 1:] = -np.linalg.inv(Ht)
    return HilbertMatrices(Hs, Hh, float(cond))


@lru_cache(maxsize=8)
def _identity_hilbert(N: int) -> HilbertMatrices:
    return build_hilbert(identity_dn_matrix(N))


def apply_P(H: HilbertMatrices, coeffs: np.ndarray, which: str = "sigma") -> np.ndarray:
    """Analytic-type projection built from a Hilbert pair.

    For a complex function g, the transform acts as H_sigma on Re(g) and as
    H_sigma_hat on Im(g); the projection is (g + i H(g))/2 plus half the
    boundary average.  ``which`` selects the leading operator: "sigma" for
    the forward pair, "sigma_hat" for the swapped pair.
    """
    if which == "sigma":
        Hre, Him = H.H_sigma, H.H_sigma_hat
    elif which == "sigma_hat":
        Hre, Him = H.H_sigma_hat, H.H_sigma
    else:
        raise ValueError(f"unknown branch {which!r}")
    w = Hre @ coeffs.real + 1j * (Him @ coeffs.imag)
    out = 0.5 * (coeffs + 1j * w)
    out[0] += 0.5 * coeffs[0]
    return out


def apply_P0(coeffs: np.ndarray, N: int | None = None) -> np.ndarray:
    """Hardy-space projection: fixes boundary traces of disc-analytic functions."""
    if N is None:
        N = (coeffs.shape[0] - 1) // 2
    return apply_P(_identity_hilbert(N), coeffs)


def apply_Pk(
    H: HilbertMatrices,
    tt: TrigTransform,
    k: complex,
    coeffs: np.ndarray,
    which: str = "sigma",
    exp_plus: np.ndarray | None = None,
    exp_minus: np.ndarray | None = None,
) -> np.ndarray:
    """Exponentially conjugated projection exp(-ikz) P(exp(ikz) g).

    The multiplications by exp(+-ikz) are carried out pointwise on the
    oversampled grid; precomputed multiplier arrays can be passed in when
    sweeping many applications at fixed k.
    """
    if exp_plus is None:
        exp_plus = np.exp(1j * k * tt.z)
    if exp_minus is None:
        exp_minus = np.exp(-1j * k * tt.z)
    s = tt.to_samples(coeffs) * exp_plus
    mid = apply_P(H, tt.to_coeffs(s), which)
    s2 = tt.to_samples(mid) * exp_minus
    return tt.to_coeffs(s2)
