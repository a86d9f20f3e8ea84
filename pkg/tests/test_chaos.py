import json
import math

import numpy as np
import pytest

from msde.chaos import (chaos_coefficients, gradient_bound_check, project_mc, q_operator, range_projection,
                        residual_energy, semigroup_solve, summability_profile)
from msde.errors import BudgetError, UsageError
from msde.fields import brownian, constant_field, ou_field
from msde.simulate import simulate_paths


def gauss(x):
    return np.exp(-0.5 * np.sum(x * x, axis=1))


def heat_gauss(x, s):
    # Gaussian terminal data smoothed by the heat kernel with a = I over time s
    d = x.shape[1]
    return (1 + s) ** (-d / 2) * np.exp(-0.5 * np.sum(x * x, axis=1) / (1 + s))


def x1(x):
    return x[:, 0]


def x1sq(x):
    return x[:, 0] ** 2


class TestSemigroup:
    @pytest.mark.parametrize("d", [1, 2])
    def test_heat_gaussian(self, d):
        sol = semigroup_solve(brownian(d), gauss, 0.0, 1.0)
        pts = np.linspace(-1.5, 1.5, 7)[:, None] * np.ones(d) / math.sqrt(d)
        assert np.max(np.abs(sol.at(0.0, pts) - heat_gauss(pts, 1.0))) < 1e-3

    def test_drift_shift(self):
        c = np.array([0.5, -0.3])
        sol = semigroup_solve(constant_field(2, drift=c), gauss, 0.0, 1.0)
        pts = np.array([[0.0, 0.0], [0.4, 0.2], [-0.5, 0.3]])
        assert np.max(np.abs(sol.at(0.0, pts) - heat_gauss(pts + c, 1.0))) < 1e-3

    def test_constants_are_fixed(self):
        sol = semigroup_solve(ou_field(2, 1.5), lambda x: np.ones(x.shape[0]), 0.0, 0.5)
        np.testing.assert_allclose(sol.values, 1.0, atol=1e-12)

    def test_terminal_data_and_max_principle(self):
        sol = semigroup_solve(ou_field(1), gauss, 0.0, 1.0)
        np.testing.assert_array_equal(sol.values[-1], sol.f)
        assert sol.max_principle_gap() <= 1e-8

    def test_flow_property(self):
        f = brownian(1)
        full = semigroup_solve(f, gauss, 0.0, 1.0, radius=8.0, nx=401, steps=200)
        mid = semigroup_solve(f, gauss, 0.5, 1.0, radius=8.0, nx=401, steps=100)
        outer = semigroup_solve(f, lambda x: mid.at(0.5, x), 0.0, 0.5, radius=8.0, nx=401, steps=100)
        pts = np.linspace(-1, 1, 5)[:, None]
        direct = full.at(0.0, pts)
        assert np.max(np.abs(outer.at(0.0, pts) - direct)) < 2 * np.max(np.abs(direct - heat_gauss(pts, 1.0)))\
            + 1e-6

    def test_unkept_time(self):
        sol = semigroup_solve(brownian(1), gauss, 0.0, 1.0, keep="ends")
        with pytest.raises(UsageError):
            sol.at(0.5, [[0.0]])


class TestQOperator:
    def test_constant_gives_zero(self):
        q = q_operator(brownian(1), lambda x: np.full(x.shape[0], 3.0), 0.0, 1.0)
        np.testing.assert_allclose(q.values, 0.0, atol=1e-12)

    def test_identity_function(self):
        q = q_operator(brownian(1), x1, 0.2, 1.0)
        pts = np.linspace(-1, 1, 9)[:, None]
        np.testing.assert_allclose(q.at(pts)[:, 0], 1.0, atol=1e-6)

    def test_square(self):
        q = q_operator(brownian(1), x1sq, 0.0, 1.0)
        pts = np.linspace(-1, 1, 9)[:, None]
        np.testing.assert_allclose(q.at(pts)[:, 0], 2 * pts[:, 0], atol=1e-3)


@pytest.fixture(scope="module")
def bm_x2():
    return chaos_coefficients(brownian(1), x1sq, 1.0, 3)


class TestExpansion:
    def test_order_zero_coefficient(self, bm_x2):
        assert bm_x2.mean == pytest.approx(1.0, abs=1e-3)

    def test_order_one_coefficients_vanish(self, bm_x2):
        np.testing.assert_allclose(bm_x2.levels[1].coefficients, 0.0, atol=1e-6)

    def test_order_two_coefficient_constant(self, bm_x2):
        np.testing.assert_allclose(bm_x2.levels[2].coefficients, 2.0, atol=1e-3)

    def test_residuals(self, bm_x2):
        assert residual_energy(bm_x2, 0) == pytest.approx(2.0, abs=1e-3)
        assert residual_energy(bm_x2, 1) == pytest.approx(2.0, abs=1e-3)
        assert residual_energy(bm_x2, 2) == pytest.approx(0.0, abs=1e-3)
        assert bm_x2.variance == pytest.approx(2.0, abs=1e-3)

    def test_pythagoras(self, bm_x2):
        for m, defect in bm_x2.pythagoras_defects().items():
            assert abs(defect) < 1e-3, m

    def test_residual_needs_next_level(self, bm_x2):
        with pytest.raises(UsageError):
            bm_x2.residual(3)

    def test_json_round_trip(self, bm_x2):
        js = json.loads(bm_x2.dumps())
        assert js["order"] == 3 and [L["m"] for L in js["levels"]] == [1, 2, 3]
        assert js["levels"][1]["multi_indices"] == [[1, 1]]

    def test_identity_function_first_chaos(self):
        exp = chaos_coefficients(brownian(1), x1, 1.0, 2)
        assert exp.residual(0) == pytest.approx(1.0, abs=1e-3)
        assert exp.residual(1) == pytest.approx(0.0, abs=1e-6)

    def test_ou_variance(self):
        exp = chaos_coefficients(ou_field(1), x1, 1.0, 2)
        assert exp.residual(0) == pytest.approx((1 - math.exp(-2)) / 2, abs=2e-3)
        assert exp.residual(1) == pytest.approx(0.0, abs=1e-4)

    def test_rejects_high_dimension_and_order(self):
        with pytest.raises(UsageError):
            chaos_coefficients(brownian(3), gauss, 1.0, 1)
        with pytest.raises(UsageError):
            chaos_coefficients(brownian(1), gauss, 1.0, 5)
        with pytest.raises(UsageError):
            chaos_coefficients(brownian(1), gauss, 0.0, 1)

    def test_budget(self):
        with pytest.raises(BudgetError):
            chaos_coefficients(brownian(2), gauss, 1.0, 3, budget=1e3)


class TestProjectMc:
    def test_constant_residual_zero(self):
        ens = simulate_paths(brownian(1), 0.0, [0.0], 1.0, 0.02, 500, seed=1)
        pr = project_mc(ens, lambda x: np.full(x.shape[0], 2.0), 1.0, 2)
        np.testing.assert_allclose(pr.residuals, 0.0, atol=1e-20)

    def test_brownian_square(self):
        ens = simulate_paths(brownian(1), 0.0, [0.0], 1.0, 0.01, 20000, seed=2)
        pr = project_mc(ens, x1sq, 1.0, 2)
        assert pr.residual(1) == pytest.approx(2.0, rel=0.1)
        assert pr.residual(2) < 0.05
        assert np.all(np.diff(pr.residuals) <= 1e-12)
        assert not pr.ill_conditioned

    def test_order_validated(self):
        ens = simulate_paths(brownian(1), 0.0, [0.0], 0.1, 0.01, 10, seed=1)
        with pytest.raises(UsageError):
            project_mc(ens, x1, 0.1, 4)


class TestGradientCheck:
    def test_ou_equality(self):
        rep = gradient_bound_check(ou_field(1), x1, 0.0, 1.0, [0.0], [1.0], n=1, M=2000, dt=0.01, seed=3,
                                   grad_f=lambda x: np.ones_like(x))
        assert rep.lhs.value == pytest.approx(math.exp(-2), abs=1e-3)
        assert rep.partial_sums[0] == pytest.approx(math.exp(-2), abs=1e-3)
        assert rep.passed

    def test_constant_function(self):
        rep = gradient_bound_check(brownian(1), lambda x: np.ones(x.shape[0]), 0.0, 1.0, [0.0], [1.0], n=1,
                                   M=200, dt=0.02, seed=0)
        assert rep.lhs.value == 0.0
        np.testing.assert_allclose(rep.partial_sums, 0.0, atol=1e-12)

    def test_odd_steps_rejected(self):
        ens = simulate_paths(brownian(1), 0.0, [0.0], 0.03, 0.01, 5, seed=0)
        with pytest.raises(UsageError):
            gradient_bound_check(brownian(1), x1, 0.0, 0.03, [0.0], [1.0], ens=ens)


class TestSummability:
    def test_brownian_square(self):
        prof = summability_profile(brownian(1), x1sq, 1.0, n_max=2)
        assert prof.residuals[0] == pytest.approx(2.0, abs=1e-3)
        assert prof.residuals[1] == pytest.approx(0.0, abs=1e-3)
        assert prof.running_sum[-1] == pytest.approx(2.0, abs=1e-3)
        assert math.isfinite(prof.implied_constant)

    def test_brownian_identity_sums_to_zero(self):
        prof = summability_profile(brownian(1), x1, 1.0, n_max=1)
        assert prof.running_sum[-1] == pytest.approx(0.0, abs=1e-6)


class TestRangeProjection:
    def test_identity(self):
        np.testing.assert_allclose(range_projection(np.eye(3)).Sigma, np.eye(3), atol=1e-14)

    def test_row_vector(self):
        np.testing.assert_allclose(range_projection([[1.0, 0.0]]).Sigma, np.diag([1.0, 0.0]), atol=1e-14)

    def test_zero_matrix(self):
        np.testing.assert_array_equal(range_projection(np.zeros((2, 3))).Sigma, 0.0)

    def test_rank_deficient_against_qr(self, rng):
        s = rng.normal(size=(3, 2)) @ rng.normal(size=(2, 5))
        rp = range_projection(s)
        # independent oracle: orthonormal basis of the row space from a QR of sigma^T
        q, _ = np.linalg.qr(s.T)
        oracle = q[:, :2] @ q[:, :2].T
        np.testing.assert_allclose(rp.Sigma, oracle, atol=1e-10)
        assert max(rp.defects().values()) < 1e-10

    @pytest.mark.parametrize("scale", [1e-6, 1.0, 1e6])
    def test_identities_under_scaling(self, rng, scale):
        s = scale * rng.normal(size=(2, 4))
        d = range_projection(s).defects()
        assert d["idempotent"] < 1e-10 and d["sigma_invariant"] < 1e-10 * scale
        assert d["fixes_tau"] < 1e-10 * scale**2

    def test_non_finite_rejected(self):
        with pytest.raises(UsageError):
            range_projection([[np.nan]])
