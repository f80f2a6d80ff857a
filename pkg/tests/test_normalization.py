import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from abpsim.errors import DomainError
from abpsim.normalization import (NormalizationSpec, interp_periodic, n_value, normalize,
                                  pairwise_mean, prob_density)

KINDS = [NormalizationSpec("l1"), NormalizationSpec("lq", q=2.0), NormalizationSpec("lq", q=7.0),
         NormalizationSpec("point", z0=(0.3,)), NormalizationSpec("min"),
         NormalizationSpec("max"), NormalizationSpec("min", k=4), NormalizationSpec("max", k=4)]
positive = arrays(float, 32, elements=st.floats(0.01, 100.0))


class TestNValue:
    def test_constant(self):
        for spec in KINDS:
            assert n_value(spec, np.full(64, 2.5)) == pytest.approx(2.5, rel=1e-14)

    def test_max_of_smooth(self):
        z = np.arange(512) / 512
        assert n_value(NormalizationSpec("max"), 2 + np.sin(2 * np.pi * z)) == \
            pytest.approx(3.0, abs=1e-4)

    def test_l2_against_fine_quadrature(self):
        z = np.arange(64) / 64
        f = 2 + np.cos(2 * np.pi * z)
        # exact: int (2 + cos)^2 = 4.5; rectangle rule is exact for this trig polynomial
        assert n_value(NormalizationSpec("lq", q=2.0), f) ** 2 == pytest.approx(4.5, rel=1e-13)
        zf = np.arange(256) / 256
        assert np.mean((2 + np.cos(2 * np.pi * zf)) ** 2) == pytest.approx(4.5, rel=1e-13)

    def test_parse(self):
        assert NormalizationSpec.parse("lq:3").q == 3.0
        assert NormalizationSpec.parse("point:0.25").z0 == (0.25,)
        assert NormalizationSpec.parse("max", 8).k == 8

    @pytest.mark.parametrize("bad", [np.array([1.0, 0.0]), np.array([1.0, -2.0]),
                                     np.array([np.nan, 1.0])])
    def test_domain(self, bad):
        with pytest.raises(DomainError):
            n_value(NormalizationSpec(), bad)


class TestAxioms:
    @settings(max_examples=60, deadline=None)
    @given(positive, st.floats(0.01, 100.0))
    def test_homogeneity(self, f, lam):
        for spec in KINDS:
            assert n_value(spec, lam * f) == pytest.approx(lam * n_value(spec, f), rel=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(positive)
    def test_sandwich(self, f):
        for spec in KINDS:
            v = n_value(spec, f)
            assert f.min() * (1 - 1e-12) <= v <= f.max() * (1 + 1e-12)

    @settings(max_examples=60, deadline=None)
    @given(positive, positive)
    def test_lipschitz(self, f, g):
        for spec in KINDS:
            assert abs(n_value(spec, f) - n_value(spec, g)) <= \
                np.max(np.abs(f - g)) * (1 + 1e-12) + 1e-12


class TestNormalize:
    def test_constant(self):
        np.testing.assert_array_equal(normalize(NormalizationSpec(), np.full(16, 5.0)),
                                      np.ones(16))

    def test_idempotent(self, rng):
        f = np.exp(rng.normal(size=64))
        for spec in KINDS:
            once = normalize(spec, f)
            np.testing.assert_allclose(normalize(spec, once), once, rtol=1e-12)

    def test_kinds_proportional(self, rng):
        f = np.exp(rng.normal(size=64))
        ratios = normalize(KINDS[0], f) / normalize(KINDS[1], f)
        assert np.ptp(ratios) <= 1e-12 * ratios.mean()


class TestProbDensity:
    def test_examples(self):
        np.testing.assert_array_equal(prob_density(np.full(32, 7.0)), np.ones(32))
        z = np.arange(128) / 128
        fb = prob_density(np.exp(np.cos(2 * np.pi * z)))
        assert fb.mean() == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(prob_density(fb), fb, rtol=1e-14)

    def test_pairwise_mean_exact_for_constants(self):
        assert pairwise_mean(np.full(256, 0.1)) == 0.1


class TestInterp:
    def test_midpoint(self):
        vals = np.arange(16, dtype=float)
        assert interp_periodic(vals, [2.5 / 16]) == pytest.approx(2.5, abs=1e-15)

    def test_periodic_wrap(self):
        vals = np.arange(16, dtype=float)
        assert interp_periodic(vals, [15.5 / 16]) == pytest.approx(7.5)
