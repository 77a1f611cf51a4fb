"""Command-line pipeline driver.

Subcommands mirror the pipeline stages (simulate, scatter, reconstruct), plus
the ground-truth oracle, a grid comparison tool, and ``run`` which executes
the full pipeline from a TOML or JSON config with content-hash caching of
intermediate artifacts.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .beltrami import BeltramiError, deformed_boundary, solve_beltrami, true_isotropization
from .cgo_bie import CGOSolveError
from .dbar_solver import (
    DbarSolveError,
    ReconstructionGrid,
    load_reconstruction,
    make_workspace,
    reconstruct,
    save_reconstruction,
)
from .forward import add_noise, build_mesh, dn_from_voltages, load_dn, save_dn, simulate_voltages
from .phantoms import BUILTIN_PHANTOMS, builtin_phantom, load_phantom, save_phantom
from .scattering import KGrid, compute_scattering, load_scattering, save_scattering

NUMERICAL_ERRORS = (CGOSolveError, DbarSolveError, BeltramiError, np.linalg.LinAlgError)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    phantom: str = "test1"
    mesh_level: int = 8
    N: int = 16
    noise_eta: float = 0.0
    seed: int = 0
    R: float = 6.0
    c: int = 7
    truncation: float | None = None
    zeta_max: float = 1.2
    h_zeta: float = 0.009375
    output: str = "out"
    workers: int = 0

    def validate(self) -> None:
        checks = {
            "mesh_level": self.mesh_level >= 0,
            "N": self.N >= 1,
            "noise_eta": self.noise_eta >= 0,
            "R": self.R > 0,
            "c": self.c >= 1,
            "zeta_max": self.zeta_max > 0,
            "h_zeta": 0 < self.h_zeta < self.zeta_max,
            "workers": self.workers >= 0,
        }
        bad = [k for k, ok in checks.items() if not ok]
        if bad:
            raise ConfigError(f"invalid config fields: {', '.join(bad)}")
        if self.truncation is not None and not 0 < self.truncation <= self.R:
            raise ConfigError("truncation radius must lie in (0, R]")

    @property
    def effective_workers(self) -> int:
        return self.workers if self.workers > 0 else (os.cpu_count() or 1)


def _load_config_file(path: Path) -> dict:
    text = path.read_bytes()
    if path.suffix.lower() == ".json":
        return json.loads(text)
    try:
        import tomllib
    except ImportError:  # Python 3.10
        import tomli as tomllib
    return tomllib.loads(text.decode())


def load_run_config(path: str | None, overrides: dict) -> RunConfig:
    doc: dict = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        try:
            doc = _load_config_file(p)
        except Exception as exc:
            raise ConfigError(f"cannot parse config {p}: {exc}") from exc
    flat = dict(doc)
    for section in ("scattering", "reconstruction"):
        sub = flat.pop(section, {})
        if not isinstance(sub, dict):
            raise ConfigError(f"config section {section!r} must be a table")
        flat.update(sub)
    flat.update({k: v for k, v in overrides.items() if v is not None})
    known = set(RunConfig.__dataclass_fields__)
    unknown = set(flat) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    try:
        cfg = RunConfig(**flat)
        cfg.validate()
    except TypeError as exc:
        raise ConfigError(f"malformed config value: {exc}") from exc
    return cfg


def _resolve_phantom(ref: str):
    if ref in BUILTIN_PHANTOMS:
        return builtin_phantom(ref)
    p = Path(ref)
    if not p.exists():
        raise ConfigError(
            f"phantom {ref!r} is neither a builtin ({', '.join(BUILTIN_PHANTOMS)}) nor a file"
        )
    return load_phantom(p)


def _digest(*parts) -> str:
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, bytes):
            h.update(part)
        else:
            h.update(json.dumps(part, sort_keys=True, default=str).encode())
    return h.hexdigest()


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# ---------------------------------------------------------------- subcommands


def cmd_simulate(args) -> int:
    field = _resolve_phantom(args.phantom)
    mesh = build_mesh(args.mesh_level)
    V = simulate_voltages(mesh, field, args.basis_order)
    V = add_noise(V, args.noise, args.seed)
    dn = dn_from_voltages(
        mesh.boundary_theta,
        V,
        args.basis_order,
        {
            "phantom": field.name,
            "mesh_level": args.mesh_level,
            "noise_eta": args.noise,
            "seed": args.seed,
        },
    )
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_dn(dn, args.out)
    print(f"wrote {args.out} (ND condition {dn.meta['nd_condition']:.3e})")
    return 0


def cmd_scatter(args) -> int:
    dn = load_dn(args.dn)
    grid = KGrid(args.radius, args.kexp)
    data = compute_scattering(
        dn, grid, R_trunc=args.truncation, workers=args.workers or (os.cpu_count() or 1)
    )
    save_scattering(data, args.out)
    print(
        f"wrote {args.out} (max |t| = {np.abs(data.t).max():.4f}, "
        f"zeroed points = {data.zeroed_points})"
    )
    return 0


def cmd_reconstruct(args) -> int:
    data = load_scattering(args.scattering)
    ws = make_workspace(data)
    grid = reconstruct(
        ws,
        zeta_max=args.zeta_max,
        h_zeta=args.h_zeta,
        workers=args.workers or (os.cpu_count() or 1),
    )
    save_reconstruction(grid, args.out)
    print(
        f"wrote {args.out} (range [{np.nanmin(grid.values):.4f}, {np.nanmax(grid.values):.4f}], "
        f"failed points = {grid.failed_points})"
    )
    return 0


def cmd_oracle(args) -> int:
    field = _resolve_phantom(args.phantom)
    qc = solve_beltrami(field, S=args.domain_half_width, n=args.grid_size)
    grid = true_isotropization(qc, field, zeta_max=args.zeta_max, h_zeta=args.h_zeta)
    outdir = Path(args.out)
    save_reconstruction(grid, outdir, stem="oracle")
    boundary = deformed_boundary(qc)
    with open(outdir / "boundary.csv", "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["zeta1", "zeta2"])
        wr.writerows([[repr(float(x)), repr(float(y))] for x, y in boundary])
    print(
        f"wrote {outdir} (gamma range [{np.nanmin(grid.values):.4f}, {np.nanmax(grid.values):.4f}], "
        f"boundary max radius {np.hypot(boundary[:, 0], boundary[:, 1]).max():.4f})"
    )
    return 0


def compare_grids(recon: ReconstructionGrid, oracle: ReconstructionGrid) -> dict:
    """Sup/L2 relative errors on the common mask plus per-side extremal values."""
    if (
        abs(recon.zeta_max - oracle.zeta_max) > 1e-12
        or abs(recon.h_zeta - oracle.h_zeta) > 1e-12
        or recon.values.shape != oracle.values.shape
    ):
        raise ConfigError("reconstruction grids do not match")
    common = (
        recon.mask & oracle.mask & np.isfinite(recon.values) & np.isfinite(oracle.values)
    )
    diff = recon.values[common] - oracle.values[common]
    ref = oracle.values[common]
    pts = recon.points()
    metrics = {
        "sup_rel_error": float(np.abs(diff).max() / np.abs(ref).max()),
        "l2_rel_error": float(np.linalg.norm(diff) / np.linalg.norm(ref)),
        "common_points": int(common.sum()),
    }
    for name, g in (("recon", recon), ("oracle", oracle)):
        vals = np.where(common, g.values, np.nan)
        left = np.where(pts.real < 0, vals, np.nan)
        right = np.where(pts.real >= 0, vals, np.nan)
        metrics[name] = {
            "max": float(np.nanmax(vals)),
            "min": float(np.nanmin(vals)),
            "left_max": float(np.nanmax(left)),
            "right_max": float(np.nanmax(right)),
        }
    return metrics


def cmd_compare(args) -> int:
    recon = load_reconstruction(args.recon, stem=args.recon_stem)
    oracle = load_reconstruction(args.oracle, stem=args.oracle_stem)
    metrics = compare_grids(recon, oracle)
    text = json.dumps(metrics, indent=2)
    if args.out:
        Path(args.out).write_text(text)
    print(text)
    return 0


def cmd_run(args) -> int:
    overrides = {
        "phantom": args.phantom,
        "mesh_level": args.mesh_level,
        "noise_eta": args.noise,
        "seed": args.seed,
        "R": args.radius,
        "c": args.kexp,
        "output": args.out,
        "workers": args.workers,
    }
    cfg = load_run_config(args.config, overrides)
    outdir = Path(cfg.output)
    outdir.mkdir(parents=True, exist_ok=True)
    manifest_path = outdir / "manifest.json"
    previous = {}
    if manifest_path.exists():
        try:
            previous = json.loads(manifest_path.read_text()).get("stages", {})
        except json.JSONDecodeError:
            previous = {}

    field = _resolve_phantom(cfg.phantom)
    phantom_path = outdir / "phantom.json"
    save_phantom(field, phantom_path)
    stages: dict = {}
    workers = cfg.effective_workers

    def stage(name: str, inputs_hash: str, outputs: list[Path], fn):
        prev = previous.get(name, {})
        if prev.get("hash") == inputs_hash and all(p.exists() for p in outputs):
            stages[name] = dict(prev, skipped=True)
            return
        t0 = time.perf_counter()
        extra = fn() or {}
        stages[name] = {
            "hash": inputs_hash,
            "seconds": round(time.perf_counter() - t0, 3),
            "skipped": False,
            **extra,
        }

    # stage 0: forward voltages (expensive FEM, independent of noise)
    volt_path = outdir / "voltages.npz"
    volt_hash = _digest(phantom_path.read_bytes(), cfg.mesh_level, cfg.N)

    def do_voltages():
        mesh = build_mesh(cfg.mesh_level)
        V = simulate_voltages(mesh, field, cfg.N)
        np.savez_compressed(volt_path, V=V, theta=mesh.boundary_theta)

    stage("voltages", volt_hash, [volt_path], do_voltages)

    # stage 1: noisy DN matrix
    dn_path = outdir / "dn.json"
    dn_hash = _digest(volt_hash, _file_digest(volt_path), cfg.noise_eta, cfg.seed)

    def do_dn():
        arx = np.load(volt_path)
        V = add_noise(arx["V"], cfg.noise_eta, cfg.seed)
        dn = dn_from_voltages(
            arx["theta"],
            V,
            cfg.N,
            {
                "phantom": field.name,
                "mesh_level": cfg.mesh_level,
                "noise_eta": cfg.noise_eta,
                "seed": cfg.seed,
            },
        )
        save_dn(dn, dn_path)
        return {"nd_condition": dn.meta["nd_condition"]}

    stage("simulate", dn_hash, [dn_path], do_dn)

    # stage 2: scattering transform
    scat_dir = outdir / "scattering"
    scat_hash = _digest(dn_hash, _file_digest(dn_path), cfg.R, cfg.c, cfg.truncation)

    def do_scatter():
        dn = load_dn(dn_path)
        data = compute_scattering(
            dn, KGrid(cfg.R, cfg.c), R_trunc=cfg.truncation, workers=workers
        )
        save_scattering(data, scat_dir)
        return {
            "zeroed_points": data.zeroed_points,
            "max_bie_residual": data.meta["max_bie_residual"],
        }

    stage("scatter", scat_hash, [scat_dir / "scattering.csv"], do_scatter)

    # stage 3: reconstruction
    recon_hash = _digest(
        scat_hash, _file_digest(scat_dir / "scattering.csv"), cfg.zeta_max, cfg.h_zeta
    )

    def do_reconstruct():
        data = load_scattering(scat_dir)
        grid = reconstruct(
            make_workspace(data), zeta_max=cfg.zeta_max, h_zeta=cfg.h_zeta, workers=workers
        )
        save_reconstruction(grid, outdir)
        return {
            "failed_points": grid.failed_points,
            "max_imag_residual": grid.max_imag_residual,
            "gamma_min": float(np.nanmin(grid.values)),
            "gamma_max": float(np.nanmax(grid.values)),
        }

    stage("reconstruct", recon_hash, [outdir / "reconstruction.csv"], do_reconstruct)

    import scipy

    manifest = {
        "versions": {
            "anisodbar": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "config": asdict(cfg),
        "stages": stages,
        "artifacts": {
            name: _file_digest(p)
            for name, p in {
                "voltages": volt_path,
                "dn": dn_path,
                "scattering": scat_dir / "scattering.csv",
                "reconstruction": outdir / "reconstruction.csv",
            }.items()
        },
    }
    manifest_path.write_text(json.dumps(manifest, indent=2))
    skipped = [k for k, v in stages.items() if v.get("skipped")]
    print(f"pipeline complete: {outdir} (skipped: {', '.join(skipped) or 'none'})")
    return 0


# ---------------------------------------------------------------- arg parsing


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="anisodbar", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="FEM forward solve to a DN matrix file")
    sim.add_argument("--phantom", required=True, help="builtin name or phantom JSON file")
    sim.add_argument("--mesh-level", type=int, default=8)
    sim.add_argument("--basis-order", type=int, default=16, metavar="N")
    sim.add_argument("--noise", type=float, default=0.0, metavar="ETA")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", required=True, help="output dn.json path")
    sim.set_defaults(fn=cmd_simulate)

    sc = sub.add_parser("scatter", help="CGO traces and scattering transform")
    sc.add_argument("--dn", required=True)
    sc.add_argument("--radius", type=float, required=True, metavar="R")
    sc.add_argument("--kexp", type=int, default=7, metavar="C")
    sc.add_argument("--truncation", type=float, default=None)
    sc.add_argument("--workers", type=int, default=0)
    sc.add_argument("--out", required=True, help="output directory")
    sc.set_defaults(fn=cmd_scatter)

    rc = sub.add_parser("reconstruct", help="solve the spectral equation on a zeta grid")
    rc.add_argument("--scattering", required=True, help="scatter output directory")
    rc.add_argument("--zeta-max", type=float, default=1.2)
    rc.add_argument("--h-zeta", type=float, default=0.009375)
    rc.add_argument("--workers", type=int, default=0)
    rc.add_argument("--out", required=True)
    rc.set_defaults(fn=cmd_reconstruct)

    orc = sub.add_parser("oracle", help="quasiconformal ground-truth images")
    orc.add_argument("--phantom", required=True)
    orc.add_argument("--grid-size", type=int, default=1024)
    orc.add_argument("--domain-half-width", type=float, default=2.0)
    orc.add_argument("--zeta-max", type=float, default=1.2)
    orc.add_argument("--h-zeta", type=float, default=0.009375)
    orc.add_argument("--out", required=True)
    orc.set_defaults(fn=cmd_oracle)

    cp = sub.add_parser("compare", help="error metrics between two grids")
    cp.add_argument("--recon", required=True)
    cp.add_argument("--oracle", required=True)
    cp.add_argument("--recon-stem", default="reconstruction")
    cp.add_argument("--oracle-stem", default="oracle")
    cp.add_argument("--out", default=None)
    cp.set_defaults(fn=cmd_compare)

    rn = sub.add_parser("run", help="full pipeline with cached stages")
    rn.add_argument("--config", default=None, help="TOML or JSON config file")
    rn.add_argument("--phantom", default=None)
    rn.add_argument("--mesh-level", type=int, default=None)
    rn.add_argument("--noise", type=float, default=None)
    rn.add_argument("--seed", type=int, default=None)
    rn.add_argument("--radius", type=float, default=None)
    rn.add_argument("--kexp", type=int, default=None)
    rn.add_argument("--workers", type=int, default=None)
    rn.add_argument("--out", default=None)
    rn.set_defaults(fn=cmd_run)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NUMERICAL_ERRORS as exc:
        stage = args.command
        print(f"numerical failure in stage {stage!r}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
