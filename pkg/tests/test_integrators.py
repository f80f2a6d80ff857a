import numpy as np
import pytest

from abpsim.errors import ConfigError, NumericalBlowup
from abpsim.integrators import RngStream, StepperConfig, baoab_step, default_scheme, em_step

quiet = RngStream(0, zero_noise=True)


class TestRngStream:
    def test_reproducible(self):
        a = RngStream(7, 3).normals(5)
        b = RngStream(7, 3).normals(5)
        assert np.array_equal(a, b)

    def test_streams_differ(self):
        assert not np.array_equal(RngStream(7, 0).normals(5), RngStream(7, 1).normals(5))

    def test_zero_noise(self):
        assert np.array_equal(quiet.normals(3), np.zeros(3))


class TestEulerMaruyama:
    def test_still(self):
        x = np.array([0.3, 0.6])
        assert np.array_equal(em_step(x, np.zeros(2), 0.1, quiet), x)

    def test_wraps(self):
        out = em_step(np.array([0.8, 0.2]), np.array([1.0, 0.0]), 0.5, quiet)
        np.testing.assert_allclose(out, [0.3, 0.2])

    def test_mask_leaves_open_coordinates(self):
        out = em_step(np.array([0.8, 0.8]), np.array([1.0, 1.0]), 0.5, quiet,
                      periodic=[True, False])
        np.testing.assert_allclose(out, [0.3, 1.3])

    def test_blowup(self):
        with pytest.raises(NumericalBlowup):
            em_step(np.array([0.1]), np.array([np.inf]), 0.1, quiet)

    def test_ou_stationary_variance(self):
        # 400 stationary chains of length 5 give 2000 time units in total
        rng = RngStream(11)
        x = rng.normals(400)
        dt, acc, n = 1e-3, 0.0, 0
        for _ in range(5000):
            x = em_step(x, -x, dt, rng, periodic=False)
            acc += np.mean(x * x)
            n += 1
        assert acc / n == pytest.approx(1.0, rel=0.05)


class TestBAOAB:
    def test_free_flight(self):
        q, p = baoab_step(np.array([0.0]), np.array([1.0]), lambda q: np.zeros_like(q),
                          1e-300, 0.1, quiet)
        np.testing.assert_allclose(q, [0.1])
        np.testing.assert_allclose(p, [1.0])

    def test_exact_friction_factor(self):
        dt = 0.1
        q, p = np.array([0.2]), np.array([1.0])
        for k in range(1, 4):
            q, p = baoab_step(q, p, lambda q: np.zeros_like(q), np.log(2) / dt, dt, quiet)
            assert p[0] == pytest.approx(0.5 ** k)

    def test_momentum_marginal(self):
        rng = RngStream(5)
        q, p = rng.generator.random(200), rng.normals(200)
        force = lambda q: 2 * np.pi * np.sin(2 * np.pi * q)
        acc = 0.0
        for _ in range(5000):
            q, p = baoab_step(q, p, force, 1.0, 1e-3, rng)
            acc += np.mean(p * p)
        assert acc / 5000 == pytest.approx(1.0, rel=0.05)


class TestStepperConfig:
    def test_defaults(self):
        assert default_scheme("langevin") == "baoab"
        assert default_scheme("extended") == "euler_maruyama"

    def test_rejects_mismatch(self):
        with pytest.raises(ConfigError):
            StepperConfig(1e-3, "baoab").check_family("brownian")

    def test_rejects_bad_dt(self):
        with pytest.raises(ConfigError):
            StepperConfig(0.0)
