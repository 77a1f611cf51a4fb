"""Anisotropic conductivity phantoms on the unit disc.

A phantom is a list of inclusions (discs or ellipses carrying a constant
symmetric positive-definite 2x2 tensor) in an identity background, with an
optional C2 mollified transition of width ``smoothing_rho`` between inclusion
and background values.  Fields are evaluated lazily at arbitrary points so
that mesh-based and grid-based consumers can sample at their own nodes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Inclusion",
    "ConductivityField",
    "builtin_phantom",
    "BUILTIN_PHANTOMS",
    "load_phantom",
    "save_phantom",
]


def _smoothstep(s: np.ndarray) -> np.ndarray:
    """Quintic C2 ramp: 0 for s <= 0, 1 for s >= 1, monotone in between."""
    s = np.clip(s, 0.0, 1.0)
    return s * s * s * (s * (6.0 * s - 15.0) + 10.0)


@dataclass(frozen=True)
class Inclusion:
    """One inclusion: a disc or ellipse carrying a constant SPD tensor."""

    shape: str  # "disc" | "ellipse"
    center: tuple[float, float]
    semi_axes: tuple[float, float]
    rotation_rad: float
    tensor: np.ndarray  # (2, 2) symmetric positive definite

    def __post_init__(self):
        t = np.asarray(self.tensor, dtype=float)
        if t.shape != (2, 2):
            raise ValueError("inclusion tensor must be 2x2")
        if abs(t[0, 1] - t[1, 0]) > 1e-12 * max(1.0, abs(t).max()):
            raise ValueError("inclusion tensor must be symmetric")
        ev = np.linalg.eigvalsh(t)
        if ev.min() <= 0:
            raise ValueError("inclusion tensor must be positive definite")
        if self.shape not in ("disc", "ellipse"):
            raise ValueError(f"unknown inclusion shape {self.shape!r}")
        object.__setattr__(self, "tensor", t)

    def signed_distance(self, pts: np.ndarray) -> np.ndarray:
        """Approximate signed distance to the inclusion boundary (<0 inside).

        Exact for discs; for ellipses the normalized radial coordinate is
        rescaled by the minor semi-axis, which keeps the mollified transition
        at most ``rho`` wide everywhere.
        """
        dx = pts[..., 0] - self.center[0]
        dy = pts[..., 1] - self.center[1]
        c, s = math.cos(self.rotation_rad), math.sin(self.rotation_rad)
        xr = c * dx + s * dy
        yr = -s * dx + c * dy
        a, b = self.semi_axes
        r = np.sqrt((xr / a) ** 2 + (yr / b) ** 2)
        return (r - 1.0) * min(a, b)


@dataclass(frozen=True)
class ConductivityField:
    """SPD tensor field on the plane, identity outside the unit disc.

    ``smoothing_rho == 0`` gives the discontinuous (piecewise constant)
    variant; ``smoothing_rho > 0`` blends each inclusion tensor into the
    identity background across a transition band of that width, centered on
    the inclusion boundary.  Blending is componentwise and convex, so the
    field stays SPD.
    """

    name: str
    inclusions: tuple[Inclusion, ...] = field(default_factory=tuple)
    smoothing_rho: float = 0.0

    def weights(self, pts: np.ndarray) -> np.ndarray:
        """Per-inclusion blending weights in [0, 1], shape pts.shape[:-1] + (n_inc,)."""
        pts = np.asarray(pts, dtype=float)
        w = np.empty(pts.shape[:-1] + (len(self.inclusions),))
        for i, inc in enumerate(self.inclusions):
            d = inc.signed_distance(pts)
            if self.smoothing_rho > 0:
                w[..., i] = 1.0 - _smoothstep(d / self.smoothing_rho + 0.5)
            else:
                w[..., i] = (d < 0).astype(float)
        return w

    def sigma(self, pts: np.ndarray) -> np.ndarray:
        """Evaluate the tensor field; shape pts.shape[:-1] + (2, 2)."""
        pts = np.asarray(pts, dtype=float)
        out = np.zeros(pts.shape[:-1] + (2, 2))
        out[..., 0, 0] = 1.0
        out[..., 1, 1] = 1.0
        if self.inclusions:
            w = self.weights(pts)
            for i, inc in enumerate(self.inclusions):
                out += w[..., i, None, None] * (inc.tensor - np.eye(2))
        return out

    def det_sigma(self, pts: np.ndarray) -> np.ndarray:
        s = self.sigma(pts)
        return s[..., 0, 0] * s[..., 1, 1] - s[..., 0, 1] * s[..., 1, 0]

    def sigma_hat(self, pts: np.ndarray) -> np.ndarray:
        """sigma / det(sigma); reduces to (1/gamma) I for isotropic gamma I."""
        s = self.sigma(pts)
        det = s[..., 0, 0] * s[..., 1, 1] - s[..., 0, 1] * s[..., 1, 0]
        if np.any(det <= 0):
            raise ValueError("field has non-positive determinant")
        return s / det[..., None, None]

    def mu_tilde(self, pts: np.ndarray) -> np.ndarray:
        """Complex dilatation (s11 - s22 + 2i s12) / (s11 + s22 + 2 sqrt(det)).

        Satisfies |mu_tilde| <= (C0 - 1)/(C0 + 1) < 1 when the eigenvalues of
        sigma lie in [1/C0, C0].
        """
        s = self.sigma(pts)
        det = s[..., 0, 0] * s[..., 1, 1] - s[..., 0, 1] * s[..., 1, 0]
        num = s[..., 0, 0] - s[..., 1, 1] + 2j * s[..., 0, 1]
        return num / (s[..., 0, 0] + s[..., 1, 1] + 2.0 * np.sqrt(det))

    def mu_coefficients(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return (mu_tilde, mu1, mu2) at the given points.

        mu1 = (s22 - s11 - 2i s12) / (1 + tr + det), mu2 = (1 - det) / (1 + tr + det).
        """
        s = self.sigma(pts)
        det = s[..., 0, 0] * s[..., 1, 1] - s[..., 0, 1] * s[..., 1, 0]
        tr = s[..., 0, 0] + s[..., 1, 1]
        den = 1.0 + tr + det
        mu1 = (s[..., 1, 1] - s[..., 0, 0] - 2j * s[..., 0, 1]) / den
        mu2 = (1.0 - det) / den
        return self.mu_tilde(pts), mu1, mu2

    def isothermal_mu(self, pts: np.ndarray) -> np.ndarray:
        """Beltrami coefficient of the orientation-preserving isothermal map.

        This is -mu_tilde: the dilatation whose quasiconformal solution G with
        G(z) = z + O(1/z) pushes sigma forward to sqrt(det sigma) times the
        identity (a diagonal tensor diag(a, b) must be squeezed along the
        more conductive axis, which fixes the sign).
        """
        return -self.mu_tilde(pts)

    def support_radius(self) -> float:
        """Radius beyond which the field is exactly the identity."""
        r = 0.0
        for inc in self.inclusions:
            c = math.hypot(*inc.center)
            r = max(r, c + max(inc.semi_axes) + self.smoothing_rho)
        return r


def _disc(center, radius, tensor) -> Inclusion:
    return Inclusion("disc", center, (radius, radius), 0.0, np.asarray(tensor, float))


def _ellipse(center, semi_axes, rot, tensor) -> Inclusion:
    return Inclusion("ellipse", center, semi_axes, rot, np.asarray(tensor, float))


def builtin_phantom(name: str) -> ConductivityField:
    """Construct a named builtin phantom.

    Inclusion geometry is an approximate default (configurable through the
    JSON phantom format); tensor values are exact.
    """
    rho = 0.05
    if name == "identity":
        return ConductivityField("identity", (), 0.0)
    if name in ("test1", "test1-discontinuous"):
        incs = (
            _disc((-0.5, 0.0), 0.35, [[1.0, 0.0], [0.0, 4.0]]),
            _disc((0.5, 0.0), 0.35, [[2.0, 0.0], [0.0, 1.0]]),
        )
        smooth = rho if name == "test1" else 0.0
        return ConductivityField(name, incs, smooth)
    if name in ("test2", "test2-discontinuous"):
        lung = [[0.4, 0.0], [0.0, 0.8]]
        heart = [[6.0, 0.0], [0.0, 2.0]]
        incs = (
            _ellipse((-0.45, -0.1), (0.22, 0.42), 0.25, lung),
            _ellipse((0.45, -0.1), (0.22, 0.42), -0.25, lung),
            _disc((0.0, 0.45), 0.22, heart),
        )
        smooth = rho if name == "test2" else 0.0
        return ConductivityField(name, incs, smooth)
    raise ValueError(f"unknown builtin phantom {name!r}")


BUILTIN_PHANTOMS = ("identity", "test1", "test1-discontinuous", "test2", "test2-discontinuous")


def save_phantom(field: ConductivityField, path) -> None:
    doc = {
        "name": field.name,
        "smoothing_rho": field.smoothing_rho,
        "inclusions": [
            {
                "shape": inc.shape,
                "center": list(inc.center),
                "semi_axes": list(inc.semi_axes),
                "rotation_rad": inc.rotation_rad,
                "tensor": inc.tensor.tolist(),
            }
            for inc in field.inclusions
        ],
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=2)


def load_phantom(path) -> ConductivityField:
    with open(path) as f:
        doc = json.load(f)
    incs = tuple(
        Inclusion(
            d["shape"],
            tuple(d["center"]),
            tuple(d["semi_axes"]),
            float(d.get("rotation_rad", 0.0)),
            np.asarray(d["tensor"], float),
        )
        for d in doc.get("inclusions", [])
    )
    return ConductivityField(doc["name"], incs, float(doc.get("smoothing_rho", 0.0)))
