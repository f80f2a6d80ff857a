import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from abpsim.errors import ConfigError
from abpsim.kernel import (KernelSpec, kernel_drow, kernel_eval, kernel_min_max, kernel_row,
                           mixture_weights)

unit = st.floats(0, 1, exclude_max=True)
nearly_constant = KernelSpec(alpha=1e-9)
BOUNDS = kernel_min_max(KernelSpec(), 256)


class TestKernelEval:
    def test_constant_limit(self, rng):
        vals = kernel_eval(nearly_constant, rng.random((50, 1)), rng.random((50, 1)))
        assert np.max(np.abs(vals - 1.0)) <= 1e-6

    def test_peak(self):
        peak = kernel_eval(KernelSpec(alpha=1.0), [0.3], [0.3])
        assert peak == pytest.approx(1 / (0.05 * np.sqrt(2 * np.pi)), abs=1e-3)

    def test_integrates_to_one(self):
        z = (np.arange(4096) / 4096)[:, None]
        for spec in (KernelSpec(), KernelSpec(epsilon=0.3), KernelSpec(alpha=1.0)):
            vals = kernel_eval(spec, z, np.full((4096, 1), 0.71))
            assert vals.mean() == pytest.approx(1.0, abs=1e-10)

    def test_symmetric(self, rng):
        a, b = rng.random((100, 1)), rng.random((100, 1))
        np.testing.assert_allclose(kernel_eval(KernelSpec(), a, b), kernel_eval(KernelSpec(), b, a),
                                   rtol=1e-13)

    @settings(max_examples=50, deadline=None)
    @given(unit, unit, st.floats(0.02, 0.3), st.floats(0.01, 1.0))
    def test_positive_with_floor(self, z, zeta, eps, alpha):
        v = kernel_eval(KernelSpec(epsilon=eps, alpha=alpha), [z], [zeta])
        assert v >= 1 - alpha - 1e-15

    @settings(max_examples=30, deadline=None)
    @given(unit, unit, unit)
    def test_lipschitz_in_zeta(self, z, a, b):
        spec = KernelSpec()
        M1 = BOUNDS[2]
        dist = abs(((a - b) + 0.5) % 1.0 - 0.5)
        assert abs(kernel_eval(spec, [z], [a]) - kernel_eval(spec, [z], [b])) <= \
            M1 * dist + 1e-9


class TestSpecValidation:
    @pytest.mark.parametrize("kw", [{"alpha": 1.5}, {"alpha": 0.0}, {"epsilon": 0.0},
                                    {"wraps": 1}])
    def test_rejects(self, kw):
        with pytest.raises(ConfigError):
            KernelSpec(**kw)

    def test_alpha_message(self):
        with pytest.raises(ConfigError, match=r"alpha must lie in \(0,1\]"):
            KernelSpec(alpha=1.5)


class TestKernelRow:
    def test_constant_like_small_grid(self):
        np.testing.assert_allclose(kernel_row(nearly_constant, 4, [0.2]), np.ones(4), atol=1e-6)

    def test_constant_family_exact(self):
        assert np.array_equal(kernel_row(KernelSpec.constant(), 64, [0.37]), np.ones(64))

    @pytest.mark.parametrize("zeta", [0.0, 0.123, 0.5, 0.999])
    def test_discrete_mean_one(self, zeta):
        assert kernel_row(KernelSpec(), 256, [zeta]).mean() == pytest.approx(1.0, abs=1e-12)

    def test_two_dimensional_mean(self):
        assert kernel_row(KernelSpec(), 64, [0.2, 0.8], m=2).mean() == \
            pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("zeta", [0.1, 0.4321, 0.9987])
    def test_peak_at_nearest_node(self, zeta):
        G = 256
        assert np.argmax(kernel_row(KernelSpec(), G, [zeta])) == int(np.rint(zeta * G)) % G

    def test_derivative_matches_finite_difference(self):
        spec, G, h = KernelSpec(), 256, 1e-6
        fd = -(kernel_row(spec, G, [0.3 + h]) - kernel_row(spec, G, [0.3 - h])) / (2 * h)
        # d/dz K(z, zeta) = -d/dzeta K for a translation-invariant bump (up to row scaling)
        np.testing.assert_allclose(kernel_drow(spec, G, [0.3]), fd, atol=1e-3 * np.abs(fd).max())


class TestMinMax:
    def test_constant_like(self):
        lo, hi, d1 = kernel_min_max(nearly_constant, 64)
        # the sampling margin widens the interval by a relative 1e-6
        assert lo == pytest.approx(1.0, abs=2e-6)
        assert hi == pytest.approx(1.0, abs=2e-6)
        assert d1 < 1e-6

    def test_floor(self):
        lo, hi, d1 = kernel_min_max(KernelSpec(), 256)
        assert lo == pytest.approx(0.1, rel=2e-6)
        assert lo <= 0.1

    def test_peak(self):
        _, hi, _ = kernel_min_max(KernelSpec(alpha=1.0), 256)
        assert hi == pytest.approx(7.979, abs=1e-2)

    def test_bounds_cover_random_rows(self, rng):
        spec = KernelSpec()
        lo, hi, d1 = kernel_min_max(spec, 256)
        for z in rng.random(20):
            row = kernel_row(spec, 256, [z])
            assert lo <= row.min() and row.max() <= hi
            assert np.abs(kernel_drow(spec, 256, [z])).max() <= d1


class TestMixture:
    def make(self):
        comps = (KernelSpec(epsilon=0.05), KernelSpec(epsilon=0.1), KernelSpec(epsilon=0.2))
        return KernelSpec("mixture", components=comps, centers=(0.0, 1 / 3, 2 / 3))

    def test_weights_partition_unity(self, rng):
        spec = self.make()
        for z in rng.random(20):
            w = mixture_weights(spec, [z])
            assert w.sum() == pytest.approx(1.0) and np.all(w >= 0)

    def test_row_mean_one(self):
        assert kernel_row(self.make(), 128, [0.4]).mean() == pytest.approx(1.0, abs=1e-12)
