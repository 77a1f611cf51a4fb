import hashlib
import json

import numpy as np
import pytest

from anisodbar.cli import RunConfig, compare_grids, load_run_config, main
from anisodbar.dbar_solver import ReconstructionGrid, load_reconstruction

FAST = [
    "--mesh-level", "4",
    "--radius", "3.0",
    "--kexp", "4",
    "--workers", "1",
]


def run_fast(tmp_path, name, *extra):
    out = tmp_path / name
    cfg = tmp_path / f"{name}.json"
    cfg.write_text(json.dumps({
        "phantom": "identity",
        "mesh_level": 4,
        "N": 16,
        "R": 3.0,
        "c": 4,
        "zeta_max": 1.2,
        "h_zeta": 0.15,
        "workers": 1,
        "output": str(out),
    }))
    rc = main(["run", "--config", str(cfg), *extra])
    assert rc == 0
    return out


class TestRunConfig:
    def test_validation(self):
        with pytest.raises(Exception):
            RunConfig(mesh_level=-1).validate()
        with pytest.raises(Exception):
            RunConfig(h_zeta=2.0, zeta_max=1.2).validate()
        RunConfig().validate()

    def test_unknown_keys_rejected(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps({"phantom": "identity", "zeta_maxx": 1.0}))
        from anisodbar.cli import ConfigError

        with pytest.raises(ConfigError, match="unknown config keys"):
            load_run_config(str(p), {})

    def test_toml_with_sections(self, tmp_path):
        p = tmp_path / "cfg.toml"
        p.write_text(
            'phantom = "test1"\nmesh_level = 5\n'
            "[scattering]\nR = 6.0\nc = 7\n"
            "[reconstruction]\nzeta_max = 1.2\nh_zeta = 0.0094\n"
        )
        cfg = load_run_config(str(p), {})
        assert cfg.phantom == "test1"
        assert cfg.R == 6.0
        assert cfg.c == 7

    def test_overrides_win(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps({"phantom": "identity", "c": 5}))
        cfg = load_run_config(str(p), {"c": 6})
        assert cfg.c == 6


class TestSubcommands:
    def test_simulate_scatter_reconstruct_chain(self, tmp_path):
        dn = tmp_path / "dn.json"
        assert main(["simulate", "--phantom", "identity", "--mesh-level", "4", "--out", str(dn)]) == 0
        doc = json.loads(dn.read_text())
        assert doc["basis"] == "trig" and doc["N"] == 16
        scat = tmp_path / "scat"
        assert main(["scatter", "--dn", str(dn), "--radius", "3.0", "--kexp", "4",
                     "--workers", "1", "--out", str(scat)]) == 0
        assert (scat / "scattering.csv").exists()
        assert (scat / "scattering.json").exists()
        rec = tmp_path / "rec"
        assert main(["reconstruct", "--scattering", str(scat), "--h-zeta", "0.2",
                     "--workers", "1", "--out", str(rec)]) == 0
        assert (rec / "reconstruction.csv").exists()
        assert (rec / "reconstruction.pgm").exists()
        grid = load_reconstruction(rec)
        assert np.nanmax(np.abs(grid.values[grid.mask] - 1.0)) < 0.05

    def test_oracle_subcommand(self, tmp_path):
        out = tmp_path / "oracle"
        rc = main(["oracle", "--phantom", "test1", "--grid-size", "256",
                   "--h-zeta", "0.05", "--out", str(out)])
        assert rc == 0
        assert (out / "oracle.csv").exists()
        assert (out / "boundary.csv").exists()
        rows = (out / "boundary.csv").read_text().splitlines()[1:]
        pts = np.array([[float(v) for v in r.split(",")] for r in rows])
        assert np.hypot(pts[:, 0], pts[:, 1]).max() < 1.2

    def test_unknown_phantom_exits_2(self, tmp_path):
        assert main(["simulate", "--phantom", "nope", "--out", str(tmp_path / "x.json")]) == 2

    def test_numerical_failure_exits_3(self, tmp_path):
        # a zero DN matrix has a singular tangential block
        dn = tmp_path / "dn.json"
        dn.write_text(json.dumps({"basis": "trig", "N": 16, "matrix": [0.0] * (33 * 33), "meta": {}}))
        rc = main(["scatter", "--dn", str(dn), "--radius", "2.0", "--kexp", "3",
                   "--workers", "1", "--out", str(tmp_path / "s")])
        assert rc == 3


class TestRunPipeline:
    def test_end_to_end_and_manifest(self, tmp_path):
        out = run_fast(tmp_path, "a")
        manifest = json.loads((out / "manifest.json").read_text())
        assert set(manifest["stages"]) == {"voltages", "simulate", "scatter", "reconstruct"}
        assert all(not s["skipped"] for s in manifest["stages"].values())
        assert "anisodbar" in manifest["versions"]
        grid = load_reconstruction(out)
        assert np.nanmax(np.abs(grid.values[grid.mask] - 1.0)) < 0.02

    def test_bit_identical_reruns(self, tmp_path):
        a = run_fast(tmp_path, "a")
        b = run_fast(tmp_path, "b")
        for rel in ("dn.json", "scattering/scattering.csv", "reconstruction.csv"):
            ha = hashlib.sha256((a / rel).read_bytes()).hexdigest()
            hb = hashlib.sha256((b / rel).read_bytes()).hexdigest()
            assert ha == hb, rel

    def test_cache_skips_unchanged_stages(self, tmp_path):
        out = run_fast(tmp_path, "a")
        cfg = tmp_path / "a.json"
        assert main(["run", "--config", str(cfg)]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert all(s["skipped"] for s in manifest["stages"].values())

    def test_noise_change_invalidates_downstream_only(self, tmp_path):
        out = run_fast(tmp_path, "a")
        cfg = tmp_path / "a.json"
        assert main(["run", "--config", str(cfg), "--noise", "0.001", "--seed", "3"]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        stages = manifest["stages"]
        assert stages["voltages"]["skipped"]  # the FEM solve is reused
        assert not stages["simulate"]["skipped"]
        assert not stages["scatter"]["skipped"]
        assert not stages["reconstruct"]["skipped"]

    def test_missing_config_exits_2(self):
        assert main(["run", "--config", "/nonexistent/cfg.toml"]) == 2


class TestCompare:
    def make_grid(self, values_fill=1.0):
        g = ReconstructionGrid.empty(1.0, 0.25)
        g.values = np.where(g.mask, values_fill, np.nan)
        return g

    def test_identical_grids_zero_error(self):
        m = compare_grids(self.make_grid(2.0), self.make_grid(2.0))
        assert m["sup_rel_error"] == 0
        assert m["l2_rel_error"] == 0

    def test_extremal_values_reported(self):
        a = self.make_grid(1.0)
        pts = a.points()
        a.values = np.where(a.mask, np.where(pts.real < 0, 2.0, 1.5), np.nan)
        m = compare_grids(a, self.make_grid(1.0))
        assert m["recon"]["left_max"] == 2.0
        assert m["recon"]["right_max"] == 1.5

    def test_grid_mismatch_raises(self):
        from anisodbar.cli import ConfigError

        with pytest.raises(ConfigError):
            compare_grids(self.make_grid(), ReconstructionGrid.empty(1.0, 0.5))

    def test_cli_compare_exit_codes(self, tmp_path):
        from anisodbar.dbar_solver import save_reconstruction

        a = self.make_grid(1.0)
        save_reconstruction(a, tmp_path / "a")
        save_reconstruction(a, tmp_path / "b", stem="oracle")
        rc = main(["compare", "--recon", str(tmp_path / "a"), "--oracle", str(tmp_path / "b"),
                   "--out", str(tmp_path / "metrics.json")])
        assert rc == 0
        metrics = json.loads((tmp_path / "metrics.json").read_text())
        assert metrics["sup_rel_error"] == 0
        mismatched = self.make_grid(1.0)
        mismatched.h_zeta = 0.5
        save_reconstruction(mismatched, tmp_path / "c", stem="oracle")
        assert main(["compare", "--recon", str(tmp_path / "a"), "--oracle", str(tmp_path / "c")]) == 2
