import math

import numpy as np
import pytest

from msde import spaces
from msde.errors import QuadratureError, UsageError
from msde.fields import (brownian, build_bump_drift, build_drift_inverse, build_drift_parabolic, constant_field,
                         zoo_field)

SMALL = spaces.SamplerSpec(n_points=1024, centers_per_axis=3, n_radii=4)


def _split_with_cells(cells, edges):
    return spaces.DriftSplit(lam=None, b_M=None, b_B=None, t_nodes=np.asarray(edges, float),
                             b_tilde_cells=np.asarray(cells, float))


class TestMorrey:
    def test_zero_field(self):
        assert spaces.morrey_constant(brownian(2), 2.0, 0.5, SMALL).value == 0.0

    def test_constant_field_attains_sup_at_largest_radius(self):
        c = np.array([0.3, -0.4])
        cert = spaces.morrey_constant(constant_field(2, drift=c), 2.0, 0.5, SMALL)
        assert cert.value == pytest.approx(0.5 * 0.5, rel=1e-12)
        assert cert.argmax["rho"] == pytest.approx(0.5)

    def test_inverse_drift_closed_form(self):
        cert = spaces.morrey_constant(build_drift_inverse(1.0, 3), 2.0, 0.5, SMALL)
        assert cert.value == pytest.approx(math.sqrt(3), rel=0.02)
        assert cert.argmax["x"] == [0.0, 0.0, 0.0]

    def test_nondecreasing_in_r_max(self):
        b = build_bump_drift(2, 1.0, 0.7)
        vals = [spaces.morrey_constant(b, 2.0, r, SMALL).value for r in (0.1, 0.2, 0.4)]
        assert vals[0] <= vals[1] <= vals[2]

    def test_scaling_covariance(self):
        # b_s(x) = s b(s x) with r_max / s reports the same constant
        s = 2.0
        b = build_bump_drift(2, 1.0, 1.0)
        bs = b.with_drift(lambda t, x: s * b.drift_fn(t, s * x), support_radius=0.5)
        c1 = spaces.morrey_constant(b, 2.0, 0.4, spaces.SamplerSpec(n_points=2048, centers_per_axis=1,
                                                                    include_landmarks=False))
        c2 = spaces.morrey_constant(bs, 2.0, 0.2, spaces.SamplerSpec(n_points=2048, centers_per_axis=1,
                                                                     include_landmarks=False))
        assert c2.value == pytest.approx(c1.value, rel=0.01)

    def test_certificate_json_fields(self):
        js = spaces.morrey_constant(build_drift_inverse(1.0, 2), 1.5, 0.5, SMALL).to_json()
        assert set(js) == {"quantity", "value", "argmax", "samples", "quadrature_error", "pass", "threshold"}
        assert set(js["argmax"]) == {"t", "x", "rho"}

    def test_rejects_bad_arguments(self):
        with pytest.raises(UsageError):
            spaces.morrey_constant(brownian(2), 0.5, 0.5)
        with pytest.raises(UsageError):
            spaces.morrey_constant(brownian(2), 2.0, 0.0)

    def test_non_integrable_singularity_is_reported(self):
        with pytest.raises(QuadratureError):
            spaces.morrey_constant(build_drift_inverse(1.0, 2), 2.0, 0.5, SMALL)


class TestVmo:
    def test_x_independent_diffusion(self):
        f = brownian(2).with_sigma(lambda t, x: np.broadcast_to((1 + t)[:, None, None] * np.eye(2),
                                                                (x.shape[0], 2, 2)).copy(),
                                   time_dependent=True)
        assert spaces.vmo_modulus(f, 0.2, SMALL).value <= 1e-8

    def test_constant_matrix(self):
        f = constant_field(2, sigma=np.array([[1.0, 0.2], [0.0, 1.5]]))
        assert spaces.vmo_modulus(f, 0.1, SMALL).value <= 1e-8

    def test_oscillating_diffusion_is_positive(self):
        cert = spaces.vmo_modulus(zoo_field("sigma_vmo", d=2), 0.1, SMALL)
        assert cert.value > 0.1 and cert.quadrature_error < 0.05


class TestWeakLd:
    def test_zero_and_bounded(self):
        assert spaces.weak_ld_criterion(brownian(2), [0.5, 1, 2], SMALL).value == 0.0
        b = build_bump_drift(2, 0.4, 1.0)
        assert spaces.weak_ld_criterion(b, [0.5, 1.0], SMALL).value == 0.0

    def test_inverse_drift_is_flat_in_lambda(self):
        lams = [2.0, 4.0, 8.0, 16.0]
        res = spaces.weak_ld_criterion(build_drift_inverse(1.0, 3), lams,
                                       spaces.SamplerSpec(n_points=2048, centers_per_axis=1))
        unit_ball = 4 * math.pi / 3
        assert res.value == pytest.approx(unit_ball, rel=0.03)
        noise = max(3 * float(np.max(res.std_error)), 1e-12)
        assert float(np.std(res.per_lambda, ddof=1)) < 3 * noise

    def test_rejects_empty_grid(self):
        with pytest.raises(UsageError):
            spaces.weak_ld_criterion(brownian(2), [])


class TestSplit:
    def test_zero_drift(self):
        sp = spaces.split_drift(brownian(2), 4.0, 1.0, n_t=4, spatial_nodes=16)
        assert float(sp.lam(0.5)) == 0.0
        assert sp.b_B_norm == 0.0

    def test_identity_of_the_two_quadratures(self):
        sp = spaces.split_drift(build_bump_drift(2, 1.0, 1.0), 4.0, 1.0, n_t=8)
        assert sp.lambda_sq_integral == pytest.approx(sp.rhs_integral, rel=5e-3)

    def test_reconstruction_and_threshold(self, rng):
        b = build_bump_drift(2, 3.0, 1.0)
        sp = spaces.split_drift(b, 4.0, 0.5, n_t=8)
        x = rng.uniform(-1.2, 1.2, (4000, 2))
        t = 0.3
        full = b.drift(t, x)
        np.testing.assert_array_equal(sp.b_M.drift(t, x) + sp.b_B.drift(t, x), full)
        lam = float(sp.lam(t))
        assert np.all(np.linalg.norm(sp.b_B.drift(t, x), axis=1) <= lam)
        big = np.linalg.norm(full, axis=1) >= lam
        np.testing.assert_array_equal(sp.b_M.drift(t, x)[~big], 0.0)

    def test_large_threshold_leaves_everything_bounded(self, rng):
        b = build_bump_drift(2, 0.1, 1.0)
        sp = spaces.split_drift(b, 4.0, 100.0, n_t=4)
        x = rng.uniform(-1, 1, (500, 2))
        assert np.all(sp.b_M.drift(0.5, x) == 0)

    def test_rejects_p_not_above_d(self):
        with pytest.raises(UsageError):
            spaces.split_drift(build_bump_drift(2), 2.0, 1.0)

    def test_rejects_singular_drift(self):
        with pytest.raises(QuadratureError):
            spaces.split_drift(build_drift_inverse(1.0, 2), 4.0, 1.0)


class TestBetaModulus:
    def test_zero_window(self):
        assert spaces.beta_modulus(_split_with_cells([1.0], [0, 1]), 0.0) == 0.0

    def test_constant(self):
        sp = _split_with_cells([0.5] * 10, np.linspace(0, 2, 11))
        assert spaces.beta_modulus(sp, 0.6) == pytest.approx(0.25 * 0.6)

    def test_window_covering_support(self):
        sp = _split_with_cells([1.0, 0.0], [0, 1, 3])
        assert spaces.beta_modulus(sp, 2.0) == pytest.approx(1.0)

    def test_nondecreasing(self, rng):
        sp = _split_with_cells(rng.random(20), np.linspace(0, 1, 21))
        vals = [spaces.beta_modulus(sp, t) for t in np.linspace(0, 1.5, 31)]
        assert all(b >= a - 1e-15 for a, b in zip(vals, vals[1:]))


class TestCertify:
    def test_trivial_field_passes_with_zero_values(self):
        rep = spaces.certify_assumption(brownian(2), 0.1, 1.0, 0.5, 0.5, 2.0, SMALL)
        assert rep.passed
        assert [c.value for c in rep.certificates] == pytest.approx([0.0, 0.0, 0.0], abs=1e-12)

    def test_large_inverse_drift_fails_morrey_clause(self):
        rep = spaces.certify_assumption(build_drift_inverse(10.0, 3), 0.1, 0.1, 0.5, 0.5, 2.0, SMALL)
        assert not rep.passed
        morrey = rep.certificates[1]
        assert not morrey.passed and morrey.value > 0.1

    def test_small_parabolic_drift_passes_below_dimension(self):
        sampler = spaces.SamplerSpec(n_points=1024, centers_per_axis=3, n_radii=4, times=(0.0, 0.1, 0.5))
        rep = spaces.certify_assumption(build_drift_parabolic(0.1, 2), 0.1, 0.5, 0.5, 0.5, 1.5, sampler)
        assert rep.certificates[1].passed
