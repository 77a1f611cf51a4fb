"""Periodic-convolution solver for the spectral D-bar equation.

For each reconstruction point zeta the equation

    M(k) = 1 + (1/(pi k)) * [ t(k) e(zeta,-k) conj(M(k)) / (4 pi conj(k)) ]

(convolution in k over the truncated scattering support) is solved on a
zero-padded dyadic grid.  Padding the half-open k-grid by a factor two per
axis makes the cyclic FFT convolution equal to the true convolution for all
outputs on the physical grid: the convolution support is strictly inside
(-3R, 3R) while the padded period is 4R, so no wrap-around alias reaches the
center.  The k = 0 samples of both the fundamental solution and t(k)/conj(k)
are set to their analytic limiting value zero.

Conjugation of M makes the map real-linear, so GMRES runs on stacked
real/imaginary vectors.  The conductivity value is the square of M at k = 0.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from .scattering import ScatteringData

__all__ = [
    "DbarWorkspace",
    "make_workspace",
    "solve_dbar_at",
    "ReconstructionGrid",
    "reconstruct",
    "save_reconstruction",
    "load_reconstruction",
]


@dataclass(frozen=True)
class DbarWorkspace:
    """Precomputed padded-grid quantities shared by every zeta solve."""

    n_pad: int
    h: float
    k_re: np.ndarray  # (n_pad, n_pad), FFT ordering
    k_im: np.ndarray
    green_hat: np.ndarray  # FFT of h^2/(pi k), k=0 sample zeroed
    tk_over_kbar: np.ndarray  # t(k)/(4 pi conj(k)), k=0 sample zeroed
    R: float
    c: int


def make_workspace(data: ScatteringData) -> DbarWorkspace:
    grid = data.grid
    n, n_pad, h = grid.n, 2 * grid.n, grid.h
    j = sfft.fftfreq(n_pad) * n_pad
    J1, J2 = np.meshgrid(j, j, indexing="ij")
    kc = h * (J1 + 1j * J2)
    nz = kc != 0
    green = np.zeros((n_pad, n_pad), complex)
    green[nz] = 1.0 / (np.pi * kc[nz])
    t_pad = np.zeros((n_pad, n_pad), complex)
    lo = n_pad // 2 - n // 2
    t_pad[lo : lo + n, lo : lo + n] = data.t
    t_pad = sfft.ifftshift(t_pad)
    tk = np.zeros((n_pad, n_pad), complex)
    tk[nz] = t_pad[nz] / (4.0 * np.pi * np.conj(kc[nz]))
    return DbarWorkspace(
        n_pad, h, kc.real.copy(), kc.imag.copy(), sfft.fft2(green) * h * h, tk, grid.R, grid.c
    )


class DbarSolveError(RuntimeError):
    pass


def _rdot(u: np.ndarray, v: np.ndarray) -> float:
    # real inner product of complex arrays viewed as stacked real vectors
    return float(np.real(np.vdot(u, v)))


def _gmres_real_linear(apply_op, b, x0, tol, restart, maxiter):
    """Restarted GMRES over the real field with complex array storage.

    The operator is real-linear (it conjugates its argument), so the Krylov
    recursion is run with the real inner product Re<u, v>; the Hessenberg
    matrix is then real and the usual Givens least-squares update applies.
    Returns (solution, relative residual against |b|).
    """
    bnorm = np.sqrt(_rdot(b, b))
    x = x0.copy()
    total = 0
    while total < maxiter:
        r = b - apply_op(x)
        beta = np.sqrt(_rdot(r, r))
        if beta <= tol * bnorm:
            return x, beta / bnorm
        m = min(restart, maxiter - total)
        V = np.empty((m + 1,) + b.shape, dtype=complex)
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        V[0] = r / beta
        g[0] = beta
        j = 0
        while j < m:
            w = apply_op(V[j])
            for i in range(j + 1):  # modified Gram-Schmidt
                H[i, j] = _rdot(V[i], w)
                w -= H[i, j] * V[i]
            H[j + 1, j] = np.sqrt(_rdot(w, w))
            if H[j + 1, j] > 1e-14 * bnorm:
                V[j + 1] = w / H[j + 1, j]
            for i in range(j):  # apply stored rotations to the new column
                hi = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = hi
            rho = np.hypot(H[j, j], H[j + 1, j])
            cs[j], sn[j] = H[j, j] / rho, H[j + 1, j] / rho
            H[j, j] = rho
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            j += 1
            total += 1
            if abs(g[j]) <= tol * bnorm:
                break
        y = np.linalg.solve(H[:j, :j], g[:j])
        x = x + np.tensordot(y, V[:j], axes=1)
        if abs(g[j]) <= tol * bnorm:
            return x, abs(g[j]) / bnorm
    r = b - apply_op(x)
    return x, np.sqrt(_rdot(r, r)) / bnorm


def solve_dbar_at(
    ws: DbarWorkspace,
    zeta: complex,
    tol: float = 1e-7,
    restart: int = 30,
    maxiter: int = 150,
    x0: np.ndarray | None = None,
) -> tuple[np.ndarray, complex]:
    """Solve the real-linear system at one zeta; returns (M grid, M at k=0).

    ``x0`` seeds the Krylov iteration with a complex grid; the solution at a
    neighboring zeta is a good start when sweeping an image.
    """
    # e(zeta,-k) = exp(-i(k zeta + conj(k zeta))) = exp(-2i Re(k zeta));
    # k_re/k_im vary along one axis each, so the multiplier is an outer
    # product of two 1-D exponentials
    phase = np.exp(-2j * zeta.real * ws.k_re[:, 0])[:, None] * np.exp(
        2j * zeta.imag * ws.k_im[0, :]
    )
    T = ws.tk_over_kbar * phase
    if not np.any(T):
        m = np.ones((ws.n_pad, ws.n_pad), complex)
        return m, 1.0 + 0.0j
    gh = ws.green_hat

    def apply_op(m):
        return m - sfft.ifft2(gh * sfft.fft2(T * np.conj(m)))

    b = np.ones((ws.n_pad, ws.n_pad), dtype=complex)
    m, res = _gmres_real_linear(apply_op, b, b if x0 is None else x0, tol, restart, maxiter)
    if res > tol * 10:
        raise DbarSolveError(
            f"D-bar iteration at zeta={zeta:.4g} stalled (relative residual {res:.2e}); "
            "scattering data may be inconsistent or the truncation radius too large"
        )
    return m, complex(m[0, 0])


@dataclass
class ReconstructionGrid:
    """Conductivity samples on a uniform square grid masked to |zeta| <= zeta_max."""

    zeta_max: float
    h_zeta: float
    axis: np.ndarray  # 1-D coordinates, shared by both axes
    values: np.ndarray  # real gamma samples, NaN outside the mask
    mask: np.ndarray
    max_imag_residual: float = 0.0
    failed_points: int = 0
    meta: dict = field(default_factory=dict)

    @classmethod
    def empty(cls, zeta_max: float, h_zeta: float) -> "ReconstructionGrid":
        n = int(round(2.0 * zeta_max / h_zeta))
        axis = (np.arange(n) - n // 2) * h_zeta
        X, Y = np.meshgrid(axis, axis, indexing="ij")
        mask = X * X + Y * Y <= zeta_max * zeta_max
        vals = np.full((n, n), np.nan)
        return cls(zeta_max, h_zeta, axis, vals, mask)

    def points(self) -> np.ndarray:
        X, Y = np.meshgrid(self.axis, self.axis, indexing="ij")
        return X + 1j * Y


_WORKER_STATE: tuple | None = None


def _init_zeta_worker(ws: DbarWorkspace, tol: float) -> None:
    global _WORKER_STATE
    _WORKER_STATE = (ws, tol)


def _solve_zeta_row(zetas: np.ndarray):
    """Solve one grid row, warm-starting each point from its row neighbor.

    A row is always processed as a unit, so results are identical for any
    worker count; the warm start only seeds the Krylov iteration and every
    point still converges to the shared tolerance.
    """
    ws, tol = _WORKER_STATE
    out = np.empty(len(zetas), complex)
    ok = np.ones(len(zetas), bool)
    x0 = None
    for i, z in enumerate(zetas):
        try:
            m, m0 = solve_dbar_at(ws, z, tol=tol, x0=x0)
            out[i] = m0
            x0 = m
        except DbarSolveError:
            out[i] = np.nan
            ok[i] = False
            x0 = None
    return out, ok


def _fill_failed(values: np.ndarray, mask: np.ndarray) -> int:
    """Replace failed (NaN-inside-mask) samples by the mean of valid neighbors."""
    bad = mask & ~np.isfinite(values)
    count = int(bad.sum())
    if count == 0:
        return 0
    n = values.shape[0]
    for i, j in zip(*np.nonzero(bad)):
        acc = []
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            a, b = i + di, j + dj
            if 0 <= a < n and 0 <= b < n and np.isfinite(values[a, b]):
                acc.append(values[a, b])
        values[i, j] = np.mean(acc) if acc else 1.0
    return count


def reconstruct(
    ws: DbarWorkspace,
    zeta_max: float = 1.2,
    h_zeta: float = 0.009375,
    tol: float = 1e-7,
    workers: int = 1,
) -> ReconstructionGrid:
    """Recover gamma = M(zeta, 0)^2 at every masked grid point.

    Grid rows are distributed over worker processes (the workspace is shipped
    once per worker) and assembled by index, so the output does not depend on
    scheduling or worker count.  The imaginary part of gamma is discarded;
    its largest magnitude relative to |gamma| is reported as a consistency
    indicator.
    """
    out = ReconstructionGrid.empty(zeta_max, h_zeta)
    pts = out.points()
    flat = np.flatnonzero(out.mask.ravel())
    zetas = pts.ravel()[flat]
    row_of = flat // out.values.shape[1]
    rows = np.split(np.arange(len(zetas)), np.flatnonzero(np.diff(row_of)) + 1)

    if workers > 1 and len(rows) > 1:
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_init_zeta_worker, initargs=(ws, tol)
        ) as pool:
            results = list(pool.map(_solve_zeta_row, [zetas[ix] for ix in rows]))
    else:
        _init_zeta_worker(ws, tol)
        results = [_solve_zeta_row(zetas[ix]) for ix in rows]
    m0 = np.concatenate([r[0] for r in results])

    gamma = m0 * m0
    finite = np.isfinite(gamma)
    rel_imag = 0.0
    if finite.any():
        rel_imag = float(
            np.max(np.abs(gamma[finite].imag) / np.maximum(np.abs(gamma[finite]), 1e-300))
        )
    vals = out.values.ravel()
    vals[flat] = gamma.real
    out.values = vals.reshape(out.values.shape)
    out.failed_points = _fill_failed(out.values, out.mask)
    out.max_imag_residual = rel_imag
    out.meta = {"R": ws.R, "c": ws.c, "tol": tol}
    return out


def save_reconstruction(grid: ReconstructionGrid, outdir, stem: str = "reconstruction") -> None:
    """Write CSV samples, an 8-bit PGM preview, and a JSON manifest."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    pts = grid.points()
    with open(outdir / f"{stem}.csv", "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["zeta1", "zeta2", "gamma"])
        for z, v, m in zip(pts.ravel(), grid.values.ravel(), grid.mask.ravel()):
            if m:
                wr.writerow([repr(float(z.real)), repr(float(z.imag)), repr(float(v))])
    vmin = float(np.nanmin(grid.values))
    vmax = float(np.nanmax(grid.values))
    span = vmax - vmin if vmax > vmin else 1.0
    img = np.zeros(grid.values.shape, dtype=np.uint8)
    inside = grid.mask & np.isfinite(grid.values)
    img[inside] = np.clip(
        np.round(255 * (grid.values[inside] - vmin) / span), 0, 255
    ).astype(np.uint8)
    # PGM rows scan top-to-bottom: transpose axis-0=x grid and flip vertically
    raster = img.T[::-1]
    with open(outdir / f"{stem}.pgm", "wb") as f:
        f.write(f"P5\n{raster.shape[1]} {raster.shape[0]}\n255\n".encode())
        f.write(raster.tobytes())
    manifest = {
        "min": vmin,
        "max": vmax,
        "zeta_max": grid.zeta_max,
        "h_zeta": grid.h_zeta,
        "R": grid.meta.get("R"),
        "c": grid.meta.get("c"),
        "max_imag_residual": grid.max_imag_residual,
        "failed_points": grid.failed_points,
    }
    with open(outdir / f"{stem}.json", "w") as f:
        json.dump(manifest, f, indent=2)


def load_reconstruction(outdir, stem: str = "reconstruction") -> ReconstructionGrid:
    outdir = Path(outdir)
    with open(outdir / f"{stem}.json") as f:
        manifest = json.load(f)
    grid = ReconstructionGrid.empty(manifest["zeta_max"], manifest["h_zeta"])
    pts = grid.points()
    lookup = {}
    with open(outdir / f"{stem}.csv", newline="") as f:
        rd = csv.reader(f)
        next(rd)
        for row in rd:
            lookup[(float(row[0]), float(row[1]))] = float(row[2])
    vals = grid.values
    for (i, j) in zip(*np.nonzero(grid.mask)):
        vals[i, j] = lookup.get((pts[i, j].real, pts[i, j].imag), np.nan)
    grid.max_imag_residual = manifest.get("max_imag_residual", 0.0)
    grid.failed_points = manifest.get("failed_points", 0)
    grid.meta = {"R": manifest.get("R"), "c": manifest.get("c")}
    return grid
