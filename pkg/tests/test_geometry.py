import numpy as np
import pytest
from hypothesis import given, strategies as st

from abpsim.errors import DimensionError, InvalidStateError
from abpsim.geometry import periodic_displacement, torus_distance, uniform_grid, wrap

finite = st.floats(-1e6, 1e6, allow_nan=False)


class TestWrap:
    def test_examples(self):
        np.testing.assert_allclose(wrap([1.25]), [0.25])
        np.testing.assert_allclose(wrap([-0.1]), [0.9])
        np.testing.assert_array_equal(wrap([0.0, 2.0]), [0.0, 0.0])

    def test_tiny_negative_stays_below_one(self):
        assert wrap(-1e-18) == 0.0

    def test_rejects_nan(self):
        with pytest.raises(InvalidStateError):
            wrap([np.nan])

    @given(finite)
    def test_idempotent_and_in_range(self, x):
        y = wrap(x)
        assert 0.0 <= y < 1.0
        assert wrap(y) == y


class TestDisplacement:
    def test_examples(self):
        assert periodic_displacement([0.9], [0.1])[0] == pytest.approx(-0.2)
        assert periodic_displacement([0.3], [0.3])[0] == 0.0
        assert periodic_displacement([0.0], [0.5])[0] == -0.5

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            periodic_displacement([0.1, 0.2], [0.1])

    @given(st.floats(0, 1, exclude_max=True), st.floats(0, 1, exclude_max=True))
    def test_antisymmetric_off_antipode(self, a, b):
        d = periodic_displacement(a, b)
        assert -0.5 <= d < 0.5
        if abs(abs(d) - 0.5) > 1e-12:
            assert periodic_displacement(b, a) == pytest.approx(-d, abs=1e-12)

    @given(st.floats(0, 1, exclude_max=True), st.floats(0, 1, exclude_max=True))
    def test_consistent_with_wrap(self, a, b):
        d = periodic_displacement(a, b)
        assert abs(periodic_displacement(wrap(b + d), a)) < 1e-9

    def test_distance(self):
        assert torus_distance([0.95, 0.0], [0.05, 0.0]) == pytest.approx(0.1)


def test_uniform_grid():
    np.testing.assert_array_equal(uniform_grid(4), [0, 0.25, 0.5, 0.75])
