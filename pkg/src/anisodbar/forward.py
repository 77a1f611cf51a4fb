"""Anisotropic FEM forward solver on the unit disc.

Simulates boundary voltage data for trigonometric current patterns with
piecewise-linear elements, assembles the discrete Neumann-to-Dirichlet matrix
by boundary projection, and inverts its non-constant block to obtain the
Dirichlet-to-Neumann matrix used by the reconstruction pipeline.  A seeded
Gaussian noise model perturbs the per-pattern voltage vectors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .phantoms import ConductivityField

__all__ = [
    "DiscMesh",
    "build_mesh",
    "DNMatrix",
    "solve_neumann",
    "simulate_voltages",
    "add_noise",
    "dn_from_voltages",
    "assemble_dn",
    "save_dn",
    "load_dn",
]

BASE_TRIANGLES = 4  # triangle count of the unrefined disc mesh


@dataclass(frozen=True)
class DiscMesh:
    """Conforming triangulation of the closed unit disc.

    ``boundary_vertices`` are indices into ``vertices``, ordered
    counterclockwise by angle; all of them lie on the unit circle.
    """

    vertices: np.ndarray  # (V, 2)
    triangles: np.ndarray  # (T, 3) CCW
    boundary_vertices: np.ndarray  # (B,) ordered by angle
    level: int

    @property
    def boundary_theta(self) -> np.ndarray:
        b = self.vertices[self.boundary_vertices]
        return np.mod(np.arctan2(b[:, 1], b[:, 0]), 2.0 * np.pi)


def build_mesh(level: int) -> DiscMesh:
    """Uniformly refined disc mesh: 4 * 4^level triangles, 4 * 2^level boundary vertices.

    Each refinement splits every triangle at its edge midpoints; midpoints of
    boundary edges are projected back onto the unit circle, which keeps the
    boundary vertices equiangular.
    """
    if level < 0:
        raise ValueError("refinement level must be >= 0")
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
    tris = np.array([[0, 1, 2], [0, 2, 3], [0, 3, 4], [0, 4, 1]])
    is_bdry = np.array([False, True, True, True, True])
    for _ in range(level):
        edges = np.sort(
            np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]]), axis=1
        )
        uniq, inv = np.unique(edges, axis=0, return_inverse=True)
        mid = 0.5 * (verts[uniq[:, 0]] + verts[uniq[:, 1]])
        on_circle = is_bdry[uniq[:, 0]] & is_bdry[uniq[:, 1]]
        mid[on_circle] /= np.linalg.norm(mid[on_circle], axis=1)[:, None]
        base = len(verts)
        verts = np.vstack([verts, mid])
        is_bdry = np.concatenate([is_bdry, on_circle])
        nt = len(tris)
        m01 = base + inv[:nt]
        m12 = base + inv[nt : 2 * nt]
        m20 = base + inv[2 * nt :]
        tris = np.concatenate(
            [
                np.stack([tris[:, 0], m01, m20], axis=1),
                np.stack([tris[:, 1], m12, m01], axis=1),
                np.stack([tris[:, 2], m20, m12], axis=1),
                np.stack([m01, m12, m20], axis=1),
            ]
        )
    bidx = np.where(is_bdry)[0]
    ang = np.mod(np.arctan2(verts[bidx, 1], verts[bidx, 0]), 2.0 * np.pi)
    bidx = bidx[np.argsort(ang)]
    return DiscMesh(verts, tris, bidx, level)


@dataclass(frozen=True)
class DNMatrix:
    """Discrete Dirichlet-to-Neumann matrix in the trig basis.

    The (2N+1)x(2N+1) matrix has a zero first row and column (constants carry
    no current) and is symmetric up to solver roundoff.
    """

    N: int
    matrix: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (2 * self.N + 1, 2 * self.N + 1):
            raise ValueError("DN matrix shape inconsistent with N")
        object.__setattr__(self, "matrix", m)


def _current_patterns(theta: np.ndarray, N: int) -> np.ndarray:
    """Trig patterns phi_1..phi_2N sampled at boundary angles; columns are patterns."""
    P = np.empty((len(theta), 2 * N))
    for m in range(1, N + 1):
        P[:, 2 * m - 2] = np.cos(m * theta) / np.sqrt(np.pi)
        P[:, 2 * m - 1] = np.sin(m * theta) / np.sqrt(np.pi)
    return P


def _stiffness(mesh: DiscMesh, field_: ConductivityField) -> sp.csr_matrix:
    """P1 stiffness matrix with the conductivity sampled at triangle barycenters."""
    p = mesh.vertices[mesh.triangles]
    sig = field_.sigma(p.mean(axis=1))
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    area2 = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (
        p[:, 2, 0] - p[:, 0, 0]
    ) * (p[:, 1, 1] - p[:, 0, 1])
    if not (area2 > 0).all():
        raise ValueError("mesh contains degenerate or misoriented triangles")
    grads = np.stack([-e[..., 1], e[..., 0]], axis=-1) / area2[:, None, None]
    sg = np.einsum("tab,tjb->tja", sig, grads)
    Kloc = 0.5 * area2[:, None, None] * np.einsum("tia,tja->tij", grads, sg)
    I = np.repeat(mesh.triangles, 3, axis=1).ravel()
    J = np.tile(mesh.triangles, (1, 3)).ravel()
    nv = len(mesh.vertices)
    return sp.csr_matrix((Kloc.ravel(), (I, J)), shape=(nv, nv))


class _NeumannSolver:
    """Factorized pure-Neumann solver with a zero-boundary-mean constraint.

    The singular stiffness system is bordered with one Lagrange multiplier row
    enforcing the trapezoid approximation of the boundary integral of u, which
    avoids pinning a vertex and preserves symmetry.
    """

    def __init__(self, mesh: DiscMesh, field_: ConductivityField):
        self.mesh = mesh
        K = _stiffness(mesh, field_)
        nv = K.shape[0]
        B = len(mesh.boundary_vertices)
        self.weight = 2.0 * np.pi / B
        c = np.zeros(nv)
        c[mesh.boundary_vertices] = self.weight
        KK = sp.bmat([[K, c[:, None]], [c[None, :], None]], format="csc")
        try:
            self._lu = spla.splu(KK)
        except RuntimeError as exc:  # pragma: no cover - SPD fields never trip this
            raise np.linalg.LinAlgError(f"stiffness factorization failed: {exc}") from exc
        self._nv = nv

    def solve(self, boundary_current: np.ndarray) -> np.ndarray:
        """Nodal potential for a boundary current density given at boundary vertices."""
        b = np.zeros(self._nv + 1)
        b[self.mesh.boundary_vertices] = self.weight * boundary_current
        return self._lu.solve(b)[: self._nv]


def solve_neumann(mesh: DiscMesh, field_: ConductivityField, j: int, N: int = 16) -> np.ndarray:
    """Solve one Neumann problem for current pattern index j in 1..2N."""
    if not 1 <= j <= 2 * N:
        raise ValueError("pattern index out of range")
    solver = _NeumannSolver(mesh, field_)
    patterns = _current_patterns(mesh.boundary_theta, N)
    return solver.solve(patterns[:, j - 1])


def simulate_voltages(mesh: DiscMesh, field_: ConductivityField, N: int = 16) -> np.ndarray:
    """Boundary voltage table: column j holds the trace of the pattern-j solution.

    The stiffness matrix is factorized once and reused across the 2N
    independent right-hand sides.
    """
    solver = _NeumannSolver(mesh, field_)
    patterns = _current_patterns(mesh.boundary_theta, N)
    B = len(mesh.boundary_vertices)
    V = np.empty((B, 2 * N))
    for j in range(2 * N):
        V[:, j] = solver.solve(patterns[:, j])[mesh.boundary_vertices]
    return V


def add_noise(V: np.ndarray, eta: float, seed: int) -> np.ndarray:
    """Per-pattern Gaussian perturbation scaled by the max absolute voltage.

    Column j becomes V_j + eta * n_j * max|V_j| with n_j standard normal;
    eta = 0 returns the input unchanged (bitwise).
    """
    if eta < 0:
        raise ValueError("noise level must be >= 0")
    if eta == 0:
        return V
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(V.shape)
    return V + eta * noise * np.abs(V).max(axis=0, keepdims=True)


def dn_from_voltages(
    theta: np.ndarray,
    V: np.ndarray,
    N: int = 16,
    meta: dict | None = None,
    max_condition: float = 1e12,
) -> DNMatrix:
    """Project voltages onto the trig basis and invert the ND block.

    The Neumann-to-Dirichlet block R[m, n] = <u_n, phi_m> uses trapezoid
    quadrature on the equiangular boundary vertices (spectrally accurate for
    trig integrands); it is symmetrized before inversion so the returned DN
    matrix is symmetric by construction.
    """
    B = len(theta)
    w = 2.0 * np.pi / B
    patterns = _current_patterns(theta, N)
    R = (w * patterns).T @ V
    R = 0.5 * (R + R.T)
    cond = np.linalg.cond(R)
    if not np.isfinite(cond) or cond > max_condition:
        raise np.linalg.LinAlgError(f"ill-conditioned ND matrix: condition {cond:.3e}")
    Lt = np.linalg.inv(R)
    L = np.zeros((2 * N + 1, 2 * N + 1))
    L[1:, 1:] = Lt
    info = {"nd_condition": float(cond)}
    if meta:
        info.update(meta)
    return DNMatrix(N, L, info)


def assemble_dn(
    mesh: DiscMesh,
    field_: ConductivityField,
    N: int = 16,
    noise_eta: float = 0.0,
    seed: int = 0,
) -> DNMatrix:
    """Full forward simulation: FEM voltages (optionally noisy) to DN matrix."""
    V = simulate_voltages(mesh, field_, N)
    V = add_noise(V, noise_eta, seed)
    meta = {
        "phantom": field_.name,
        "mesh_level": mesh.level,
        "noise_eta": noise_eta,
        "seed": seed,
    }
    return dn_from_voltages(mesh.boundary_theta, V, N, meta)


def save_dn(dn: DNMatrix, path) -> None:
    doc = {
        "basis": "trig",
        "N": dn.N,
        "matrix": dn.matrix.ravel().tolist(),
        "meta": dn.meta,
    }
    with open(path, "w") as f:
        json.dump(doc, f)


def load_dn(path) -> DNMatrix:
    with open(path) as f:
        doc = json.load(f)
    if doc.get("basis") != "trig":
        raise ValueError("unsupported DN matrix basis")
    N = int(doc["N"])
    m = np.asarray(doc["matrix"], float).reshape(2 * N + 1, 2 * N + 1)
    return DNMatrix(N, m, doc.get("meta", {}))
