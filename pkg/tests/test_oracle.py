import math

import numpy as np
import pytest

from abpsim.acceptance import bessel_I
from abpsim.errors import UnsupportedError
from abpsim.kernel import KernelSpec
from abpsim.model import potential_preset
from abpsim.oracle import (OracleConsistencyError, a_infinity, a_infinity_extended,
                           asymptotic_variance, build_tables, free_energy_star, image_density,
                           mu_star_A, poisson_1d, quadrature_mu_star, refine, torus_nodes)

zero = potential_preset("zero")
bessel = potential_preset("bessel1d")
double_well = potential_preset("double_well1d")
t2 = potential_preset("t2_coupled")
kernel = KernelSpec()

# values produced by the oracles at their default resolutions, frozen here
FROZEN = {
    "mu_star_double_well": -0.6977746579640081,
    "mu_star_t2": -0.7034080982859414,
    "mu_star_A_inf_t2": -0.25240504401516267,
    "mu_star_A_inf_double_well": -0.25292242579034974,
    "V_inf_double_well_A_inf": 0.0030647552178017803,
    "V_inf_double_well_A_zero": 0.004535582872843497,
    "V_inf_double_well_A_inf_unweighted": 0.005401545653290383,
}


@pytest.fixture(scope="module")
def A_inf_dw():
    return a_infinity(double_well, kernel, 1, 256)


class TestMuStar:
    def test_zero_potential(self):
        assert abs(quadrature_mu_star(zero, "cos1")) <= 1e-12

    def test_bessel_ratio(self):
        assert quadrature_mu_star(bessel, "cos1") == \
            pytest.approx(-bessel_I(1, 1.0) / bessel_I(0, 1.0), abs=1e-6)
        assert bessel_I(0, 1.0) == pytest.approx(1.2660658, abs=1e-7)
        assert bessel_I(1, 1.0) == pytest.approx(0.5651591, abs=1e-7)

    def test_constant_observable(self):
        assert quadrature_mu_star(t2, "one") == 1.0

    def test_frozen(self):
        assert quadrature_mu_star(double_well, "cos1") == \
            pytest.approx(FROZEN["mu_star_double_well"], abs=1e-12)
        assert quadrature_mu_star(t2, "cos1") == pytest.approx(FROZEN["mu_star_t2"], abs=1e-12)

    def test_resolution_robust(self):
        assert abs(quadrature_mu_star(t2, "cos1", 128) - quadrature_mu_star(t2, "cos1", 256)) \
            <= 1e-9

    def test_non_periodic_unsupported(self):
        with pytest.raises(UnsupportedError):
            quadrature_mu_star(potential_preset("ou"), "cos1")


class TestFreeEnergy:
    def test_zero(self):
        assert np.max(np.abs(free_energy_star(zero, 1, 64))) <= 1e-14

    def test_bessel(self):
        z = np.arange(256) / 256
        exact = np.cos(2 * np.pi * z) + math.log(bessel_I(0, 1.0))
        assert np.max(np.abs(free_energy_star(bessel, 1, 256) - exact)) <= 1e-6
        assert math.log(bessel_I(0, 1.0)) == pytest.approx(0.235914, abs=1e-6)

    def test_separable(self):
        z = np.arange(64) / 64
        exact = 2 * np.cos(2 * np.pi * z) + math.log(bessel_I(0, 2.0))
        A = free_energy_star(potential_preset("separable2d"), 1, 64)
        assert np.max(np.abs(A - exact)) <= 1e-9

    def test_normalized(self):
        assert np.mean(np.exp(-free_energy_star(t2, 1, 128))) == pytest.approx(1.0, abs=1e-12)

    def test_radon_nikodym_shift(self):
        A = 0.7 * np.cos(2 * np.pi * np.arange(128) / 128)
        dens = image_density(bessel, A, 1, 128)
        Astar = free_energy_star(bessel, 1, 128)
        expected = np.exp(-Astar + A)
        np.testing.assert_allclose(dens, expected / expected.mean(), atol=1e-9)


class TestAInfinity:
    def test_constant_kernel(self):
        assert np.max(np.abs(a_infinity(bessel, KernelSpec.constant(), 1, 128))) <= 1e-10

    def test_zero_potential(self):
        assert np.max(np.abs(a_infinity(zero, kernel, 1, 128))) <= 1e-10

    def test_mollifier_trend(self):
        Astar = free_energy_star(bessel, 1, 256)
        errs = [np.max(np.abs(a_infinity(bessel, KernelSpec(epsilon=e), 1, 256) - Astar))
                for e in (0.1, 0.05, 0.025)]
        assert errs[0] > errs[1] > errs[2]

    def test_extended_trend(self):
        Astar = free_energy_star(double_well, 1, 256)
        errs = [np.max(np.abs(a_infinity_extended(double_well, kernel, e, 1, 256) - Astar))
                for e in (0.5, 0.1, 0.02)]
        assert errs[0] > errs[1] > errs[2]

    def test_resolution_robust(self):
        a = a_infinity(bessel, kernel, 1, 256, R=2048)
        b = a_infinity(bessel, kernel, 1, 256, R=4096)
        assert np.max(np.abs(a - b)) <= 1e-9


class TestMuStarA:
    def test_zero_and_constant_bias(self):
        base = quadrature_mu_star(t2, "cos1")
        assert mu_star_A(t2, None, "cos1") == pytest.approx(base, abs=1e-13)
        assert mu_star_A(t2, 3.0, "cos1") == pytest.approx(base, abs=1e-13)

    def test_flat_histogram_identity(self):
        Astar = free_energy_star(bessel, 1, 256)
        assert mu_star_A(bessel, Astar, "bump1:0.3:6") == \
            pytest.approx(quadrature_mu_star(zero, "bump1:0.3:6"), abs=1e-8)

    def test_frozen(self, A_inf_dw):
        assert mu_star_A(double_well, A_inf_dw, "cos1") == \
            pytest.approx(FROZEN["mu_star_A_inf_double_well"], abs=1e-12)
        A2 = a_infinity(t2, kernel, 1, 256)
        assert mu_star_A(t2, A2, "cos1") == pytest.approx(FROZEN["mu_star_A_inf_t2"], abs=1e-12)

    def test_momentum(self):
        assert mu_star_A(double_well, None, "p2", family="langevin") == 1.0


class TestPoisson:
    def test_closed_form(self):
        sol = poisson_1d(zero, None, "cos1")
        np.testing.assert_allclose(sol.psi, -np.cos(2 * np.pi * sol.x) / (4 * np.pi ** 2),
                                   atol=1e-12)
        assert asymptotic_variance(zero, None, "cos1") == \
            pytest.approx(1 / (4 * np.pi ** 2), abs=1e-8)

    def test_constant_observable(self):
        assert np.max(np.abs(poisson_1d(bessel, None, "one").psi)) <= 1e-14
        assert asymptotic_variance(bessel, None, "one") == pytest.approx(0.0, abs=1e-14)

    @pytest.mark.parametrize("pot", [bessel, double_well])
    def test_defect(self, pot, A_inf_dw):
        for A in (None, A_inf_dw):
            assert poisson_1d(pot, A, "cos1").defect() <= 1e-8

    def test_frozen_variances(self, A_inf_dw):
        assert asymptotic_variance(double_well, A_inf_dw, "cos1") == \
            pytest.approx(FROZEN["V_inf_double_well_A_inf"], rel=1e-9)
        assert asymptotic_variance(double_well, None, "cos1") == \
            pytest.approx(FROZEN["V_inf_double_well_A_zero"], rel=1e-9)
        assert asymptotic_variance(double_well, A_inf_dw, "cos1", formula="unweighted") == \
            pytest.approx(FROZEN["V_inf_double_well_A_inf_unweighted"], rel=1e-9)

    def test_weighted_invariant_under_shift(self, A_inf_dw):
        assert asymptotic_variance(double_well, A_inf_dw + 2.0, "cos1") == \
            pytest.approx(asymptotic_variance(double_well, A_inf_dw, "cos1"), rel=1e-10)

    def test_resolution_robust(self, A_inf_dw):
        a = asymptotic_variance(double_well, A_inf_dw, "cos1", resolution=1024)
        b = asymptotic_variance(double_well, A_inf_dw, "cos1", resolution=2048)
        assert abs(a - b) <= 1e-9

    def test_uncentered_rhs_detected(self):
        # a non-finite observable can never pass the centering check
        with pytest.raises(OracleConsistencyError):
            poisson_1d(bessel, None, lambda x: np.full(x.shape[0], np.nan))


class TestHelpers:
    def test_refine_exact_for_trig(self):
        z = np.arange(32) / 32
        fine = refine(np.cos(2 * np.pi * z) + np.sin(6 * np.pi * z), 128)
        zf = np.arange(128) / 128
        np.testing.assert_allclose(fine, np.cos(2 * np.pi * zf) + np.sin(6 * np.pi * zf),
                                   atol=1e-13)

    def test_nodes(self):
        assert torus_nodes(4, 2).shape == (4, 4, 2)

    def test_build_tables(self):
        tab = build_tables(bessel, kernel, ["cos1"], G=128)
        assert np.mean(np.exp(-tab.A_star)) == pytest.approx(1.0, abs=1e-10)
        assert np.mean(np.exp(-tab.A_inf)) == pytest.approx(1.0, abs=1e-10)
        assert tab.V_inf["cos1"] > 0
