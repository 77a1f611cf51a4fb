"""Direct reconstruction of isotropized planar anisotropic conductivities.

The pipeline turns a discrete Dirichlet-to-Neumann matrix (simulated by the
FEM forward solver) into a scalar conductivity image in four stages: boundary
integral equations for exterior CGO traces, contour integration to the
leading expansion coefficients, assembly of the truncated scattering
transform, and a periodic-convolution solve of the spectral equation whose
value at the origin squares to the conductivity.  A quasiconformal-map oracle
provides ground-truth isotropizations for validation.
"""

__version__ = "0.1.0"

from .beltrami import QCMap, deformed_boundary, solve_beltrami, true_isotropization
from .boundary_ops import (
    HilbertMatrices,
    TrigTransform,
    apply_P0,
    apply_Pk,
    build_DT,
    build_hilbert,
    identity_dn_matrix,
)
from .cgo_bie import CGOTrace, solve_cgo_trace
from .dbar_solver import (
    DbarWorkspace,
    ReconstructionGrid,
    make_workspace,
    reconstruct,
    solve_dbar_at,
)
from .forward import (
    DiscMesh,
    DNMatrix,
    add_noise,
    assemble_dn,
    build_mesh,
    dn_from_voltages,
    simulate_voltages,
)
from .phantoms import (
    BUILTIN_PHANTOMS,
    ConductivityField,
    Inclusion,
    builtin_phantom,
    load_phantom,
    save_phantom,
)
from .scattering import KGrid, ScatteringData, compute_scattering, integrate_b1

__all__ = [
    "__version__",
    "QCMap",
    "solve_beltrami",
    "true_isotropization",
    "deformed_boundary",
    "TrigTransform",
    "HilbertMatrices",
    "build_hilbert",
    "build_DT",
    "identity_dn_matrix",
    "apply_P0",
    "apply_Pk",
    "CGOTrace",
    "solve_cgo_trace",
    "KGrid",
    "ScatteringData",
    "compute_scattering",
    "integrate_b1",
    "DbarWorkspace",
    "make_workspace",
    "solve_dbar_at",
    "ReconstructionGrid",
    "reconstruct",
    "DiscMesh",
    "DNMatrix",
    "build_mesh",
    "simulate_voltages",
    "add_noise",
    "dn_from_voltages",
    "assemble_dn",
    "ConductivityField",
    "Inclusion",
    "builtin_phantom",
    "BUILTIN_PHANTOMS",
    "load_phantom",
    "save_phantom",
]
