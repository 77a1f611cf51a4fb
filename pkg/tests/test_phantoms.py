import json

import numpy as np
import pytest

from anisodbar import BUILTIN_PHANTOMS, ConductivityField, Inclusion, builtin_phantom
from anisodbar.phantoms import load_phantom, save_phantom


def small_disc_field(tensor, rho=0.0):
    return ConductivityField(
        "custom", (Inclusion("disc", (0.0, 0.0), (0.3, 0.3), 0.0, np.asarray(tensor, float)),), rho
    )


def mu12_from_matrix(s):
    """Direct evaluation of the two auxiliary dilatations from a 2x2 tensor."""
    det = s[..., 0, 0] * s[..., 1, 1] - s[..., 0, 1] * s[..., 1, 0]
    den = 1.0 + s[..., 0, 0] + s[..., 1, 1] + det
    mu1 = (s[..., 1, 1] - s[..., 0, 0] - 2j * s[..., 0, 1]) / den
    mu2 = (1.0 - det) / den
    return mu1, mu2


class TestEvaluateSigma:
    def test_test1_left_center(self):
        f = builtin_phantom("test1")
        assert np.allclose(f.sigma(np.array([-0.5, 0.0])), np.diag([1.0, 4.0]))

    def test_background_near_boundary(self):
        for name in BUILTIN_PHANTOMS:
            f = builtin_phantom(name)
            assert np.allclose(f.sigma(np.array([0.99, 0.0])), np.eye(2))
            assert np.allclose(f.sigma(np.array([-1.5, 2.0])), np.eye(2))

    def test_test2_heart_center(self):
        f = builtin_phantom("test2")
        heart = f.inclusions[-1]
        assert np.allclose(f.sigma(np.array(heart.center)), np.diag([6.0, 2.0]))

    def test_batch_shapes(self):
        f = builtin_phantom("test2")
        pts = np.random.default_rng(0).uniform(-1, 1, size=(5, 7, 2))
        assert f.sigma(pts).shape == (5, 7, 2, 2)


class TestSigmaHat:
    def test_diag14(self):
        f = small_disc_field([[1.0, 0.0], [0.0, 4.0]])
        assert np.allclose(f.sigma_hat(np.zeros(2)), np.diag([0.25, 1.0]))

    def test_identity(self):
        f = builtin_phantom("identity")
        assert np.allclose(f.sigma_hat(np.zeros(2)), np.eye(2))

    def test_isotropic_reduces_to_reciprocal(self):
        f = small_disc_field([[2.0, 0.0], [0.0, 2.0]])
        assert np.allclose(f.sigma_hat(np.zeros(2)), 0.5 * np.eye(2))


class TestMuCoefficients:
    def test_identity_all_zero(self):
        f = builtin_phantom("identity")
        mt, m1, m2 = f.mu_coefficients(np.zeros(2))
        assert mt == 0 and m1 == 0 and m2 == 0

    def test_diag14_mu_tilde(self):
        f = small_disc_field([[1.0, 0.0], [0.0, 4.0]])
        mt, _, _ = f.mu_coefficients(np.zeros(2))
        assert np.isclose(mt, (1.0 - 4.0) / (1.0 + 4.0 + 2.0 * 2.0))

    def test_diag21_mu2(self):
        f = small_disc_field([[2.0, 0.0], [0.0, 1.0]])
        _, _, m2 = f.mu_coefficients(np.zeros(2))
        assert np.isclose(m2, (1.0 - 2.0) / (1.0 + 3.0 + 2.0))

    def test_mu_vanishes_where_identity(self):
        f = builtin_phantom("test1")
        pts = np.array([[0.0, 0.9], [0.95, 0.0], [0.0, -0.95]])
        mt, m1, m2 = f.mu_coefficients(pts)
        assert np.abs(mt).max() < 1e-14
        assert np.abs(m1).max() < 1e-14
        assert np.abs(m2).max() < 1e-14

    def test_hat_swap_relation(self):
        # mu1 is shared by sigma and sigma-hat while mu2 flips sign
        rng = np.random.default_rng(1)
        pts = rng.uniform(-0.9, 0.9, size=(200, 2))
        for name in ("test1", "test2", "test2-discontinuous"):
            f = builtin_phantom(name)
            m1, m2 = mu12_from_matrix(f.sigma(pts))
            m1h, m2h = mu12_from_matrix(f.sigma_hat(pts))
            assert np.allclose(m1h, m1, atol=1e-12)
            assert np.allclose(m2h, -m2, atol=1e-12)


class TestFieldInvariants:
    def test_eigenvalue_bounds_shipped_phantoms(self):
        rng = np.random.default_rng(2)
        pts = rng.uniform(-1.1, 1.1, size=(4000, 2))
        for name in BUILTIN_PHANTOMS:
            f = builtin_phantom(name)
            ev = np.linalg.eigvalsh(f.sigma(pts))
            assert ev.min() >= 0.4 - 1e-12
            assert ev.max() <= 6.0 + 1e-12

    def test_mu_tilde_bounded_by_contrast(self):
        rng = np.random.default_rng(3)
        pts = rng.uniform(-1.1, 1.1, size=(4000, 2))
        c0 = 6.0
        bound = (c0 - 1.0) / (c0 + 1.0)
        for name in BUILTIN_PHANTOMS:
            f = builtin_phantom(name)
            assert np.abs(f.mu_tilde(pts)).max() <= bound + 1e-12

    def test_smoothed_values_stay_spd(self):
        f = builtin_phantom("test2")
        # sample densely across the mollifier transition bands
        th = np.linspace(0, 2 * np.pi, 100)
        pts = []
        for inc in f.inclusions:
            for r in np.linspace(0.9, 1.1, 21):
                pts.append(
                    np.stack(
                        [
                            inc.center[0] + r * inc.semi_axes[0] * np.cos(th),
                            inc.center[1] + r * inc.semi_axes[1] * np.sin(th),
                        ],
                        axis=-1,
                    )
                )
        ev = np.linalg.eigvalsh(f.sigma(np.concatenate(pts)))
        assert ev.min() > 0

    def test_smoothing_converges_pointwise(self):
        sharp = builtin_phantom("test1-discontinuous")
        pts = np.array([[-0.5, 0.0], [0.5, 0.2], [0.0, 0.0], [-0.1, 0.6]])
        prev_err = np.inf
        for rho in (0.1, 0.05, 0.01, 0.001):
            smooth = ConductivityField("s", sharp.inclusions, rho)
            err = np.abs(smooth.sigma(pts) - sharp.sigma(pts)).max()
            assert err <= prev_err + 1e-15
            prev_err = err
        assert prev_err < 1e-12

    def test_isothermal_mu_is_negated_mu_tilde(self):
        f = builtin_phantom("test2")
        pts = np.random.default_rng(4).uniform(-1, 1, size=(50, 2))
        assert np.allclose(f.isothermal_mu(pts), -f.mu_tilde(pts))


class TestValidationAndIO:
    def test_rejects_nonsymmetric_tensor(self):
        with pytest.raises(ValueError, match="symmetric"):
            Inclusion("disc", (0, 0), (0.3, 0.3), 0.0, np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_rejects_indefinite_tensor(self):
        with pytest.raises(ValueError, match="positive definite"):
            Inclusion("disc", (0, 0), (0.3, 0.3), 0.0, np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_rejects_unknown_shape(self):
        with pytest.raises(ValueError, match="shape"):
            Inclusion("square", (0, 0), (0.3, 0.3), 0.0, np.eye(2))

    def test_json_round_trip(self, tmp_path):
        f = builtin_phantom("test2")
        path = tmp_path / "phantom.json"
        save_phantom(f, path)
        doc = json.loads(path.read_text())
        assert set(doc) == {"name", "smoothing_rho", "inclusions"}
        assert set(doc["inclusions"][0]) == {
            "shape",
            "center",
            "semi_axes",
            "rotation_rad",
            "tensor",
        }
        g = load_phantom(path)
        pts = np.random.default_rng(5).uniform(-1, 1, size=(100, 2))
        assert np.array_equal(f.sigma(pts), g.sigma(pts))
