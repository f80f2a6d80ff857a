import numpy as np
import pytest

from abpsim import _backend
from abpsim.bias import BiasGrid
from abpsim.engine import SimConfig
from abpsim.errors import ConfigError
from abpsim.integrators import RngStream
from abpsim.kernel import KernelSpec
from abpsim.spde import (SpdeModel, from_grid, gaussian_a_infinity, gaussian_free_energy,
                         mean_field_variance, mean_value, mean_variance, mode_variances,
                         ones_projection, run_spde_abp, spde_step, to_grid, xi_spde)

free = SpdeModel("none")
quiet = RngStream(0, zero_noise=True)


class TestModel:
    def test_curvature_gate(self):
        with pytest.raises(ConfigError, match="pi"):
            SpdeModel("cosine", c=10.0)
        SpdeModel("cosine", c=9.8)

    def test_allen_cahn_needs_override(self, caplog):
        with pytest.raises(ConfigError):
            SpdeModel("allen_cahn")
        SpdeModel("allen_cahn", allow_allen_cahn=True)
        assert "allen_cahn" in caplog.text

    def test_grid_resolution(self):
        with pytest.raises(ConfigError):
            SpdeModel(modes=32, grid=100)


class TestCollectiveVariable:
    def test_zero_field(self):
        assert xi_spde(np.zeros(8)) == 0.5

    def test_large_mean_stays_inside(self):
        u = np.zeros(8)
        u[0] = 1e12
        assert 0.99 < xi_spde(u) < 1.0

    def test_first_mode(self):
        u = np.zeros(8)
        u[0] = 1.0
        assert mean_value(u) == pytest.approx(2 * np.sqrt(2) / np.pi, abs=1e-12)
        assert xi_spde(u) == pytest.approx(0.5 + np.arctan(0.450158) / np.pi, abs=1e-6)
        assert xi_spde(u) == pytest.approx(0.634640, abs=1e-6)
        # <e_1, 1> by midpoint quadrature
        x = (np.arange(100000) + 0.5) / 100000
        assert np.mean(np.sqrt(2) * np.sin(np.pi * x)) == \
            pytest.approx(ones_projection(1)[0], abs=1e-9)

    def test_mean_series(self):
        n = np.arange(1, 20001, 2)
        assert np.sum(8 / (n * np.pi) ** 4) == pytest.approx(1 / 12, rel=1e-10)
        assert mean_variance() == 1 / 12
        assert mean_variance(32) == pytest.approx(1 / 12, rel=1e-4)


class TestSpectral:
    def test_roundtrip(self, rng):
        u = rng.normal(size=32)
        np.testing.assert_allclose(from_grid(to_grid(u, 128), 32), u, atol=1e-10)

    def test_linear_decay(self):
        u = np.zeros(32)
        u[0] = 1.0
        dt = 1e-3
        out = spde_step(free, u, None, dt, quiet)
        assert out[0] == pytest.approx(1.0 / (1 + dt * np.pi ** 2), rel=1e-15)
        assert np.all(out[1:] == 0)

    def test_every_mode_decays_exactly(self, rng):
        u = rng.normal(size=32)
        out = spde_step(free, u, BiasGrid.from_bias(np.zeros(64)), 1e-3, quiet)
        np.testing.assert_allclose(out, u / (1 + 1e-3 * free.eigenvalues), rtol=1e-14)

    def test_cosine_force_sign(self):
        u = np.zeros(32)
        u[0] = 0.5
        out = spde_step(SpdeModel("cosine", 1.0), u, None, 1e-3, quiet)
        assert out[0] > 0.5 / (1 + 1e-3 * np.pi ** 2)


class TestOracles:
    def test_gaussian_free_energy_normalized(self):
        A = gaussian_free_energy(256)
        assert np.mean(np.exp(-A)) == pytest.approx(1.0, abs=1e-12)
        assert np.argmin(A) == 128

    def test_a_infinity_constant_kernel(self):
        assert np.max(np.abs(gaussian_a_infinity(KernelSpec.constant(), 64))) <= 1e-12


class TestRuns:
    def test_constant_kernel_degenerate(self):
        rep = run_spde_abp(SpdeModel("cosine"), KernelSpec.constant(),
                           SimConfig(dt=1e-3, t_final=2.0, seed=1))
        assert np.array_equal(rep.bias_final.A, np.zeros(256))

    @pytest.mark.skipif("compiled" not in _backend.available, reason="extension not built")
    @pytest.mark.parametrize("model", [SpdeModel("cosine"), free,
                                       SpdeModel("allen_cahn", allow_allen_cahn=True)])
    def test_backends_agree(self, model):
        sim = SimConfig(dt=1e-3, t_final=0.3, seed=2)
        a = run_spde_abp(model, KernelSpec(), sim, backend="compiled")
        b = run_spde_abp(model, KernelSpec(), sim, backend="python")
        np.testing.assert_allclose(a.bias_final.h, b.bias_final.h, rtol=1e-10)
        for k in a.mu_bar:
            assert a.mu_bar[k] == pytest.approx(b.mu_bar[k], rel=1e-9, abs=1e-14)

    def test_free_field_moments(self):
        rep = run_spde_abp(free, KernelSpec(), SimConfig(dt=1e-3, t_final=100.0, seed=3),
                           adaptive=False)
        exact = 1 / (np.arange(1, 5) * np.pi) ** 2
        np.testing.assert_allclose(mode_variances(rep), exact, rtol=0.2)
        assert mean_field_variance(rep) == pytest.approx(1 / 12, rel=0.2)
        # second moment of the whole field stays near sum 1/(n pi)^2 = 1/6
        assert rep.rho_bar["norm2"] < 0.5

    def test_bounds_hold_under_cosine(self):
        rep = run_spde_abp(SpdeModel("cosine"), KernelSpec(),
                           SimConfig(dt=1e-3, t_final=20.0, seed=4))
        lo, hi = rep.F_range
        assert rep.bias_final.bound_m <= lo and hi <= rep.bias_final.bound_M0
