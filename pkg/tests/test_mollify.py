import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from msde import spaces
from msde.errors import FieldDefectError, UsageError
from msde.fields import (build_bump_drift, build_drift_inverse, build_sigma_vmo, constant_field, ou_field,
                         replace_drift)
from msde.mollify import (KernelRule, MollifiedFamily, default_kappa, ellipticity_check, mollify, select_m,
                          truncate_sigma)


def _pts(rng, n, d, h=0.5):
    return h * (2 * rng.random((n, d)) - 1)


class TestKernelRule:
    @pytest.mark.parametrize("kind", ["bump", "bump2"])
    @pytest.mark.parametrize("dim", [1, 2, 3])
    def test_unit_mass_and_symmetry(self, kind, dim):
        rule = KernelRule.build(dim, 8, kind)
        assert rule.weights.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(np.linalg.norm(rule.offsets, axis=1) < 1.0)
        np.testing.assert_allclose(rule.weights @ rule.offsets, 0.0, atol=1e-14)

    def test_unknown_kernel(self):
        with pytest.raises(UsageError):
            KernelRule.build(2, 4, "gauss")


class TestMollify:
    def test_constant_preserved(self, rng):
        c = np.array([0.7, -1.3])
        f = mollify(constant_field(2, drift=c), 4)
        x = _pts(rng, 50, 2)
        t = rng.random(50)
        np.testing.assert_allclose(f.drift(t, x), np.broadcast_to(c, (50, 2)), atol=1e-10)

    def test_affine_drift_unchanged(self, rng):
        A = np.array([[1.0, 2.0], [-0.5, 0.3]])
        v = np.array([0.1, 0.2])
        f = replace_drift(constant_field(2), lambda t, x: x @ A.T + v)
        g = mollify(f, 3, nodes=6)
        x = _pts(rng, 40, 2, 2.0)
        np.testing.assert_allclose(g.drift(np.zeros(40), x), f.drift(np.zeros(40), x), atol=1e-12)

    def test_ou_drift_is_linear_so_unchanged(self, rng):
        f = ou_field(3, 2.0)
        g = mollify(f, 5, nodes=6)
        x = _pts(rng, 20, 3)
        np.testing.assert_allclose(g.drift(np.zeros(20), x), -2.0 * x, atol=1e-12)

    def test_smooth_drift_converges(self, rng):
        b = build_bump_drift(2, 1.0, 0.8, time_modulation=0.0)
        x = _pts(rng, 64, 2)
        t = np.zeros(64)
        errs = [np.max(np.abs(mollify(b, n, nodes=8).drift(t, x) - b.drift(t, x))) for n in (4, 16)]
        assert errs[1] < errs[0] / 4

    def test_singular_drift_becomes_finite(self):
        g = mollify(build_drift_inverse(1.0, 2), 8, nodes=6)
        v = g.drift(np.zeros(1), np.zeros((1, 2)))
        assert np.all(np.isfinite(v))
        assert g.singular_fn is None
        # radial inward field averages to zero at its pole
        np.testing.assert_allclose(v, 0.0, atol=1e-10)

    def test_support_grows_by_kernel_radius(self):
        g = mollify(build_bump_drift(2, 1.0, 0.5), 4)
        assert g.support_radius == pytest.approx(0.75)

    def test_rejects_small_index(self):
        with pytest.raises(UsageError):
            mollify(constant_field(1), 0.5)

    def test_finite_differences_bounded(self):
        g = mollify(build_drift_inverse(1.0, 1), 16, nodes=12)
        xs = np.linspace(-0.5, 0.5, 201)[:, None]
        v = g.drift(np.zeros(201), xs)[:, 0]
        h = xs[1, 0] - xs[0, 0]
        for order in (1, 2, 3):
            v = np.diff(v) / h
            assert np.all(np.isfinite(v))

    def test_morrey_constant_does_not_grow(self):
        b = build_drift_inverse(1.0, 3)
        spec = spaces.SamplerSpec(centers_per_axis=1, n_points=1024, n_radii=4)
        base = spaces.morrey_constant(b, 2.0, 0.5, spec)
        moll = spaces.morrey_constant(mollify(b, 8, nodes=6), 2.0, 0.5, spec)
        tol = 3 * (base.quadrature_error * base.value + moll.quadrature_error * moll.value)
        assert moll.value <= base.value + tol


class TestSelectM:
    def test_worked_example(self):
        assert select_m(100, 0.25, 1.0) == 12

    def test_degenerate_zero(self):
        assert select_m(1, 0.01, 10.0) == 0

    def test_monotone_unbounded(self):
        ms = [select_m(n, 0.3) for n in (1, 10, 100, 1000, 10000)]
        assert ms == sorted(ms) and ms[-1] > ms[-2] > 0

    @given(n=st.integers(1, 10 ** 6), delta=st.floats(1e-4, 1.0), N_d=st.floats(1e-2, 100.0))
    def test_defining_inequality_and_maximality(self, n, delta, N_d):
        m = select_m(n, delta, N_d)
        bound = math.sqrt(delta) / 4
        assert m >= 0
        if m > 0:
            assert N_d * m / n <= bound
        assert N_d * (m + 1) / n > bound

    @pytest.mark.parametrize("args", [(10, 0.0, 1.0), (10, 1.5, 1.0), (10, 0.5, 0.0), (0, 0.5, 1.0)])
    def test_rejects_bad_inputs(self, args):
        with pytest.raises(UsageError):
            select_m(*args)


class TestTruncation:
    def test_kappa_block_identity(self):
        k = default_kappa(2, 4)
        np.testing.assert_allclose(k @ k.T, np.eye(2), atol=1e-12)
        np.testing.assert_array_equal(k[:, 2:], 0.0)

    def test_family_rejects_bad_kappa(self):
        with pytest.raises(UsageError):
            MollifiedFamily(constant_field(2), 4, 1, np.ones((2, 2)))

    def test_smooth_sigma_is_identity(self, rng):
        f = constant_field(2, sigma=np.array([[2.0, 0.0], [0.5, 1.0]]))
        for m in (0, 3):
            tr = truncate_sigma(MollifiedFamily.build(f, 4, m=m)).field
            x = _pts(rng, 10, 2)
            np.testing.assert_allclose(tr.sigma(rng.random(10), x), f.sigma(np.zeros(10), x))

    def test_undeclared_split_reports_identity(self):
        f = ou_field(2)
        f = replace(f, meta={})
        tr = truncate_sigma(MollifiedFamily.build(f, 4, m=2))
        assert tr.identity and "identity" in tr.note

    def test_empty_gamma_gives_kappa(self, rng):
        a = build_sigma_vmo(0.5, 1.0, 2)
        fam = MollifiedFamily.build(a, 8, m=-1, nodes=4)
        tr = truncate_sigma(fam).field
        x = _pts(rng, 30, 2)
        s = tr.sigma(rng.random(30), x)
        np.testing.assert_array_equal(s, np.broadcast_to(fam.kappa, s.shape))
        np.testing.assert_allclose(s[0] @ s[0].T, np.eye(2), atol=1e-12)

    def test_gamma_threshold(self):
        a = build_sigma_vmo(0.5, 1.0, 2)
        sup = float(a.meta["dsigma_b_sup"](0.0))
        below = MollifiedFamily.build(a, 8, m=int(math.floor(sup)) - 1 if sup >= 1 else -1).gamma_m()
        above = MollifiedFamily.build(a, 8, m=int(math.ceil(sup))).gamma_m()
        assert not below(np.array([0.3]))[0]
        assert above(np.array([0.3]))[0]


class TestEllipticity:
    def test_identity(self):
        rep = ellipticity_check(constant_field(3), samples=500)
        assert (rep.min_eig, rep.max_eig) == pytest.approx((1.0, 1.0))
        assert rep.passed

    def test_sigma_vmo_window(self):
        rep = ellipticity_check(build_sigma_vmo(0.5, 1.0, 2), samples=20000, bounds=(1.0, 9.0))
        assert rep.passed
        assert rep.to_json()["pass"] is True

    def test_mollified_truncated_sigma_vmo(self):
        delta = 1.0 / 9.0
        a = build_sigma_vmo(0.5, 1.0, 2)
        fam = MollifiedFamily.build(a, 64, m=select_m(64, delta), nodes=8)
        rep = ellipticity_check(truncate_sigma(fam).field, samples=4000, bounds=(delta / 4, 4 / delta),
                                times=(0.0, 0.5))
        assert rep.passed

    def test_failing_window(self):
        rep = ellipticity_check(constant_field(2, sigma=3 * np.eye(2)), samples=100, bounds=(0.5, 2.0))
        assert not rep.passed

    def test_non_finite_raises(self):
        f = constant_field(2)
        bad = replace(f, sigma_fn=lambda t, x: np.full((x.shape[0], 2, 2), np.inf))
        with pytest.raises(FieldDefectError):
            ellipticity_check(bad, samples=10)
