"""Scattering data from CGO boundary traces.

For each point of a square dyadic k-grid inside the truncation radius the two
CGO trace systems are solved, the leading exterior expansion coefficients are
extracted by contour integration over the boundary grid, and combined into
the truncated scattering transform

    t(k) = -4 pi i conj(k) tau(k),    tau(k) = (conj(b1+) - conj(b1-)) / 2.

The constant coordinate-map offset hidden in both b1 coefficients cancels in
the difference, so no coordinate deformation ever needs to be computed.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .boundary_ops import HilbertMatrices, TrigTransform, build_hilbert
from .cgo_bie import CGOSolveError, solve_cgo_trace
from .forward import DNMatrix

__all__ = [
    "KGrid",
    "ScatteringData",
    "integrate_b1",
    "tau_from_b1",
    "compute_scattering",
    "save_scattering",
    "load_scattering",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class KGrid:
    """Square dyadic grid {j h : j in [-2^(c-1), 2^(c-1))^2}, h = 2R / 2^c.

    Contains k = 0 exactly and exactly 2^(2c) points; the half-open index
    range is what the periodic FFT solver downstream requires.
    """

    R: float
    c: int

    def __post_init__(self):
        if self.R <= 0 or self.c < 1:
            raise ValueError("need R > 0 and c >= 1")

    @property
    def n(self) -> int:
        return 2**self.c

    @property
    def h(self) -> float:
        return 2.0 * self.R / self.n

    @property
    def axis_indices(self) -> np.ndarray:
        return np.arange(-(self.n // 2), self.n // 2)

    def points(self) -> np.ndarray:
        """Complex k values, shape (n, n), axis 0 = real direction."""
        j = self.axis_indices * self.h
        K1, K2 = np.meshgrid(j, j, indexing="ij")
        return K1 + 1j * K2


@dataclass
class ScatteringData:
    """Truncated scattering transform and its per-k ingredients on a KGrid."""

    grid: KGrid
    R_trunc: float
    t: np.ndarray  # complex (n, n)
    tau: np.ndarray
    b1_plus: np.ndarray
    b1_minus: np.ndarray
    zeroed_points: int = 0
    meta: dict = field(default_factory=dict)

    def masked(self, R_trunc: float) -> "ScatteringData":
        """Same data truncated at a smaller radius (bitwise on kept points)."""
        if R_trunc > self.R_trunc:
            raise ValueError("can only shrink the truncation radius")
        keep = np.abs(self.grid.points()) <= R_trunc
        return ScatteringData(
            self.grid,
            R_trunc,
            np.where(keep, self.t, 0.0),
            np.where(keep, self.tau, 0.0),
            self.b1_plus.copy(),
            self.b1_minus.copy(),
            self.zeroed_points,
            dict(self.meta),
        )


def integrate_b1(values: np.ndarray) -> complex:
    """Contour integral picking off the 1/z coefficient of a boundary trace.

    values are samples of the trace on the uniform boundary grid; the sum is
    the trapezoid rule for (1/2pi) int (M - 1) e^{i theta} d theta, exact for
    trig polynomials of degree < M - 1.
    """
    M = len(values)
    theta = np.arange(M) * (2.0 * np.pi / M)
    return complex(np.mean((values - 1.0) * np.exp(1j * theta)))


def tau_from_b1(b1_plus, b1_minus):
    return 0.5 * (np.conj(b1_plus) - np.conj(b1_minus))


def _solve_k_block(args):
    """Worker: solve both branches for a block of k values; returns index-aligned results."""
    Hs, Hh, cond, N, M, ks, tol = args
    H = HilbertMatrices(Hs, Hh, cond)
    tt = TrigTransform(N, M)
    out = []
    for k in ks:
        try:
            tp = solve_cgo_trace(H, tt, k, "plus", tol=tol)
            tm = solve_cgo_trace(H, tt, k, "minus", tol=tol)
            out.append((integrate_b1(tp.values), integrate_b1(tm.values), max(tp.residual, tm.residual)))
        except CGOSolveError as exc:
            out.append((None, None, exc.residual))
    return out


def compute_scattering(
    dn: DNMatrix,
    grid: KGrid,
    R_trunc: float | None = None,
    M: int = 256,
    tol: float = 1e-8,
    workers: int = 1,
) -> ScatteringData:
    """Solve the CGO trace systems over the grid and assemble t(k).

    Grid points with |k| > R_trunc (and k = 0, whose prefactor vanishes) are
    exact zeros.  Per-k solver failures are zeroed as well, counted, and
    logged; truncation acts as the regularizer so a zeroed point degrades the
    reconstruction gracefully instead of aborting the sweep.
    """
    if R_trunc is None:
        R_trunc = grid.R
    if R_trunc > grid.R:
        raise ValueError("truncation radius cannot exceed the grid half-width")
    H = build_hilbert(dn.matrix)
    n = grid.n
    K = grid.points()
    sel = (np.abs(K) <= R_trunc) & (K != 0)
    flat = np.flatnonzero(sel.ravel())
    kvals = K.ravel()[flat]

    b1p = np.zeros((n, n), complex)
    b1m = np.zeros((n, n), complex)
    zeroed = 0
    max_res = 0.0
    payload = (H.H_sigma, H.H_sigma_hat, H.condition, H.N, M)

    if workers > 1 and len(kvals) > workers:
        chunks = np.array_split(np.arange(len(kvals)), workers * 4)
        tasks = [payload + (kvals[ix], tol) for ix in chunks if len(ix)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_solve_k_block, tasks))
        it = (r for block in results for r in block)
    else:
        it = iter(_solve_k_block(payload + (kvals, tol)))

    for pos, res in zip(flat, it):
        bp, bm, r = res
        max_res = max(max_res, r)
        if bp is None:
            zeroed += 1
            k_fail = K.ravel()[pos]
            log.warning("zeroing scattering point k=%.4g%+.4gj (residual %.2e)", k_fail.real, k_fail.imag, r)
            continue
        i, j = divmod(pos, n)
        b1p[i, j] = bp
        b1m[i, j] = bm

    tau = tau_from_b1(b1p, b1m)
    tau[~sel] = 0.0
    t = -4j * np.pi * np.conj(K) * tau
    t[~sel] = 0.0  # includes the k = 0 entry, whose analytic limit is zero
    meta = {"max_bie_residual": max_res, "M": M, "tol": tol}
    meta.update(dn.meta)
    return ScatteringData(grid, float(R_trunc), t, tau, b1p, b1m, zeroed, meta)


def save_scattering(data: ScatteringData, outdir) -> None:
    """Write scattering.csv rows (k1, k2, Re t, Im t) plus a JSON sidecar."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    K = data.grid.points()
    with open(outdir / "scattering.csv", "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["k1", "k2", "re_t", "im_t"])
        for k, t in zip(K.ravel(), data.t.ravel()):
            wr.writerow([repr(float(k.real)), repr(float(k.imag)), repr(float(t.real)), repr(float(t.imag))])
    sidecar = {
        "R": data.grid.R,
        "R_trunc": data.R_trunc,
        "c": data.grid.c,
        "zeroed_points": data.zeroed_points,
        "meta": data.meta,
    }
    with open(outdir / "scattering.json", "w") as f:
        json.dump(sidecar, f, indent=2)


def load_scattering(outdir) -> ScatteringData:
    outdir = Path(outdir)
    with open(outdir / "scattering.json") as f:
        sidecar = json.load(f)
    grid = KGrid(float(sidecar["R"]), int(sidecar["c"]))
    n = grid.n
    t = np.zeros(n * n, complex)
    with open(outdir / "scattering.csv", newline="") as f:
        rd = csv.reader(f)
        next(rd)
        for i, row in enumerate(rd):
            t[i] = float(row[2]) + 1j * float(row[3])
    t = t.reshape(n, n)
    empty = np.zeros((n, n), complex)
    return ScatteringData(
        grid,
        float(sidecar.get("R_trunc", grid.R)),
        t,
        empty.copy(),
        empty.copy(),
        empty.copy(),
        int(sidecar.get("zeroed_points", 0)),
        sidecar.get("meta", {}),
    )
