"""Boundary integral equations for the exterior CGO traces.

For each spectral parameter k the trace of the exponentially growing solution
on the unit circle solves the linear system

    (I - P^k - P0) m = -1,

where P^k is the conjugated analytic projection built from the measured
boundary Hilbert transform ("plus" branch) or its inverse pair ("minus"
branch).  The system is real-linear on the stacked real/imaginary trig
coefficients and is solved matrix-free with restarted GMRES.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .boundary_ops import HilbertMatrices, TrigTransform, apply_P0, apply_Pk

__all__ = ["CGOTrace", "CGOSolveError", "solve_cgo_trace", "write_trace_csv"]


class CGOSolveError(RuntimeError):
    """Raised when the trace system fails to converge; carries the residual."""

    def __init__(self, k: complex, which: str, residual: float):
        super().__init__(
            f"CGO trace solve did not converge at k={k:.4g} ({which}): "
            f"relative residual {residual:.3e}"
        )
        self.k = k
        self.which = which
        self.residual = residual


@dataclass(frozen=True)
class CGOTrace:
    """Boundary values of one CGO branch at the sample grid points."""

    k: complex
    which: str  # "plus" | "minus"
    values: np.ndarray  # complex samples on the M-point boundary grid
    coeffs: np.ndarray  # complex trig coefficients, length 2N+1
    residual: float


def _stack(c: np.ndarray) -> np.ndarray:
    return np.concatenate([c.real, c.imag])


def _unstack(x: np.ndarray) -> np.ndarray:
    n = x.shape[0] // 2
    return x[:n] + 1j * x[n:]


def solve_cgo_trace(
    H: HilbertMatrices,
    tt: TrigTransform,
    k: complex,
    which: str = "plus",
    tol: float = 1e-8,
    restart: int = 40,
    maxiter: int = 400,
) -> CGOTrace:
    """Solve the trace system for one branch at one k.

    The "plus" branch uses the conjugated projection built on the measured
    Hilbert transform, the "minus" branch the one built on its inverse pair.
    Non-convergence raises :class:`CGOSolveError` with the final relative
    residual, which typically signals k too large for the data quality.
    """
    if which not in ("plus", "minus"):
        raise ValueError(f"unknown branch {which!r}")
    branch = "sigma" if which == "plus" else "sigma_hat"
    n = 2 * H.N + 1
    exp_plus = np.exp(1j * k * tt.z)
    exp_minus = np.exp(-1j * k * tt.z)

    def matvec(x):
        c = _unstack(x)
        out = c - apply_Pk(H, tt, k, c, branch, exp_plus, exp_minus) - apply_P0(c, H.N)
        return _stack(out)

    A = spla.LinearOperator((2 * n, 2 * n), matvec=matvec)
    b = _stack(-tt.constant(1.0))
    x0 = -b  # constant solution; exact for the homogeneous disc at every k
    x, info = spla.gmres(
        A, b, x0=x0, rtol=tol, atol=0.0, restart=restart, maxiter=max(1, maxiter // restart)
    )
    res = float(np.linalg.norm(matvec(x) - b) / np.linalg.norm(b))
    if info != 0 and res > tol * 10:
        raise CGOSolveError(k, which, res)
    c = _unstack(x)
    return CGOTrace(k, which, tt.to_samples(c), c, res)


def write_trace_csv(traces, path) -> None:
    """Dump traces as rows (k1, k2, branch, theta_index, Re M, Im M)."""
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["k1", "k2", "branch", "theta_index", "re_m", "im_m"])
        for tr in traces:
            for i, v in enumerate(tr.values):
                wr.writerow([tr.k.real, tr.k.imag, tr.which, i, v.real, v.imag])
