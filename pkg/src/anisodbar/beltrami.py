"""Quasiconformal ground-truth oracle.

Solves the Beltrami equation for the normalized plane homeomorphism G with
G(z) = z + O(1/z) whose push-forward turns the anisotropic tensor field into
the scalar field sqrt(det sigma).  Writing G = z + C(omega), the density
omega solves the singular integral equation

    omega = mu (1 + S omega),

with S the Beurling transform, applied through its Fourier multiplier
conj(xi)/xi on a periodized square grid.  The Cauchy transform C that
integrates omega back to G is evaluated as a free-space convolution on a
zero-padded grid so that the 1/z tail is not wrapped, which keeps the
far-field normalization accurate.

This module exists for validation and reference figures only: the
reconstruction pipeline never reads it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
import scipy.sparse.linalg as spla
from scipy.interpolate import LinearNDInterpolator, RegularGridInterpolator

from .dbar_solver import ReconstructionGrid
from .phantoms import ConductivityField

__all__ = ["QCMap", "solve_beltrami", "true_isotropization", "deformed_boundary"]


@dataclass(frozen=True)
class QCMap:
    """Sampled quasiconformal map and its complex derivatives."""

    S: float  # half-width of the sample square
    axis: np.ndarray  # 1-D grid coordinates (both axes)
    F: np.ndarray  # complex map values, (n, n), axis 0 = x
    dF: np.ndarray  # dF/dz
    dbarF: np.ndarray  # dF/dzbar
    A: complex  # leading 1/z expansion coefficient
    meta: dict = field(default_factory=dict)

    def interpolators(self):
        re = RegularGridInterpolator((self.axis, self.axis), self.F.real)
        im = RegularGridInterpolator((self.axis, self.axis), self.F.imag)
        return re, im

    def jacobian(self) -> np.ndarray:
        """Pointwise Jacobian determinant |dF|^2 - |dbarF|^2."""
        return np.abs(self.dF) ** 2 - np.abs(self.dbarF) ** 2


class BeltramiError(RuntimeError):
    pass


def solve_beltrami(
    field_: ConductivityField,
    S: float = 2.0,
    n: int = 1024,
    tol: float = 1e-8,
) -> QCMap:
    """Solve for the normalized isothermal map of a compactly supported field.

    The coefficient support must stay inside the sample square with margin;
    convergence degrades as sup|mu| approaches 1 and the solver reports the
    measured kappa when the iteration fails.
    """
    if field_.support_radius() >= S:
        raise ValueError("coefficient support must lie strictly inside the sample square")
    h = 2.0 * S / n
    axis = -S + h * np.arange(n)
    X, Y = np.meshgrid(axis, axis, indexing="ij")
    Z = X + 1j * Y
    mu = field_.isothermal_mu(np.stack([X, Y], axis=-1))
    kappa = float(np.abs(mu).max())
    if kappa >= 1.0:
        raise BeltramiError(f"coefficient is not uniformly elliptic: kappa = {kappa:.4f}")

    xi = 2.0 * np.pi * sfft.fftfreq(n, d=h)
    XI1, XI2 = np.meshgrid(xi, xi, indexing="ij")
    xic = XI1 + 1j * XI2
    beurling_mult = np.zeros((n, n), complex)
    nz = xic != 0
    beurling_mult[nz] = np.conj(xic[nz]) / xic[nz]

    def beurling(w):
        return sfft.ifft2(beurling_mult * sfft.fft2(w))

    n2 = n * n

    def matvec(x):
        w = (x[:n2] + 1j * x[n2:]).reshape(n, n)
        out = w - mu * beurling(w)
        return np.concatenate([out.real.ravel(), out.imag.ravel()])

    b = np.concatenate([mu.real.ravel(), mu.imag.ravel()])
    A_op = spla.LinearOperator((2 * n2, 2 * n2), matvec=matvec)
    x, info = spla.gmres(A_op, b, rtol=tol, atol=0.0, restart=30, maxiter=5)
    if info != 0:
        res = float(np.linalg.norm(matvec(x) - b) / max(np.linalg.norm(b), 1e-300))
        if res > tol * 10:
            raise BeltramiError(
                f"Beltrami iteration did not converge (kappa = {kappa:.4f}, residual {res:.2e})"
            )
    omega = (x[:n2] + 1j * x[n2:]).reshape(n, n)

    # free-space Cauchy transform on a zero-padded grid; the centered
    # singular cell integrates to zero by symmetry, so its sample is zero
    n_pad = 2 * n
    j = sfft.fftfreq(n_pad) * n_pad
    J1, J2 = np.meshgrid(j, j, indexing="ij")
    zk = h * (J1 + 1j * J2)
    ck = np.zeros((n_pad, n_pad), complex)
    nzk = zk != 0
    ck[nzk] = h * h / (np.pi * zk[nzk])
    wp = np.zeros((n_pad, n_pad), complex)
    wp[:n, :n] = omega
    F = Z + sfft.ifft2(sfft.fft2(ck) * sfft.fft2(wp))[:n, :n]

    dF = 1.0 + beurling(omega)
    J = np.abs(dF) ** 2 - np.abs(omega) ** 2
    inside = np.abs(Z) < S - 2 * h
    if J[inside].min() <= 0:
        raise BeltramiError("solved map is not orientation preserving on the grid")

    # Laurent orthogonality: averaging (F - z) z over a circle outside the
    # coefficient support isolates the 1/z coefficient exactly
    re, im = RegularGridInterpolator((axis, axis), F.real), RegularGridInterpolator(
        (axis, axis), F.imag
    )
    tfit = np.linspace(0.0, 2.0 * np.pi, 512, endpoint=False)
    zfit = max(S / 2.0, field_.support_radius() + 0.05) * np.exp(1j * tfit)
    pts = np.stack([zfit.real, zfit.imag], axis=-1)
    Fb = re(pts) + 1j * im(pts)
    A = complex(np.mean((Fb - zfit) * zfit))

    return QCMap(S, axis, F, dF, omega, A, {"kappa": kappa, "n": n})


def true_isotropization(
    qc: QCMap,
    field_: ConductivityField,
    zeta_max: float = 1.2,
    h_zeta: float = 0.0094,
    node_stride: int = 2,
) -> ReconstructionGrid:
    """Push sqrt(det sigma) to the deformed coordinates: gamma(F(z)) = sqrt(det sigma)(z).

    Inverse interpolation of the forward samples: the scattered points F(z_i)
    carry the values at z_i and a Delaunay-based linear interpolant evaluates
    them on the output grid.  Queries outside the mapped region stay masked.
    """
    out = ReconstructionGrid.empty(zeta_max, h_zeta)
    X, Y = np.meshgrid(qc.axis, qc.axis, indexing="ij")
    sel = np.zeros(X.shape, bool)
    sel[::node_stride, ::node_stride] = True
    sel &= np.hypot(X, Y) < min(qc.S - 0.05, zeta_max + 0.5)
    vals = np.sqrt(field_.det_sigma(np.stack([X[sel], Y[sel]], axis=-1)))
    pts = np.stack([qc.F.real[sel], qc.F.imag[sel]], axis=-1)
    interp = LinearNDInterpolator(pts, vals)
    q = out.points()
    g = interp(np.stack([q.real.ravel(), q.imag.ravel()], axis=-1)).reshape(q.shape)
    out.values = np.where(out.mask, g, np.nan)
    out.mask = out.mask & np.isfinite(out.values)
    out.meta = {"oracle": True, "A": [qc.A.real, qc.A.imag]}
    return out


def deformed_boundary(qc: QCMap, n_samples: int = 720) -> np.ndarray:
    """Image of the unit circle under the map, as a closed (n, 2) polyline."""
    re, im = qc.interpolators()
    th = np.linspace(0.0, 2.0 * np.pi, n_samples, endpoint=False)
    pts = np.stack([np.cos(th), np.sin(th)], axis=-1)
    return np.stack([re(pts), im(pts)], axis=-1)
