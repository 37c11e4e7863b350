import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from chandiff.errors import DegenerateInputError, InvalidShapeError
from chandiff.signal import l2_normalize, mean_power, power_normalize, to_complex, to_real

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def test_complex_mapping_halves():
    z = to_complex([1.0, 2.0, 3.0, 4.0])
    assert np.array_equal(z, np.array([1 + 3j, 2 + 4j]))
    assert np.array_equal(to_real(z), [1.0, 2.0, 3.0, 4.0])


def test_odd_length_rejected():
    with pytest.raises(InvalidShapeError):
        to_complex(np.ones(5))


def test_zero_vector_rejected():
    with pytest.raises(DegenerateInputError):
        power_normalize(np.zeros(4))
    with pytest.raises(DegenerateInputError):
        l2_normalize(np.zeros(4))


def test_batched_normalization(rng):
    v = rng.standard_normal((5, 8)) * np.arange(1, 6)[:, None]
    p = mean_power(power_normalize(v))
    assert np.allclose(p, 1.0, atol=1e-14)


@given(arrays(np.float64, st.integers(1, 16).map(lambda k: 2 * k), elements=finite))
def test_roundtrip_is_exact(v):
    assert np.array_equal(to_real(to_complex(v)), v)


@settings(max_examples=50)
@given(arrays(np.float64, st.integers(1, 16).map(lambda k: 2 * k),
              elements=st.floats(0.01, 100)))
def test_unit_power_after_normalize(v):
    assert abs(mean_power(power_normalize(v)) - 1.0) < 1e-12
    assert np.allclose(l2_normalize(v), power_normalize(v), rtol=1e-13)


def test_documented_values():
    assert np.array_equal(power_normalize([2.0, 2, 2, 2]), [1.0, 1, 1, 1])
    assert np.allclose(power_normalize([3.0, 4.0]), [3 / np.sqrt(12.5), 4 / np.sqrt(12.5)], rtol=1e-15)
    assert np.array_equal(l2_normalize([2.0, 0, 0, 0]), [2.0, 0, 0, 0])
    assert np.array_equal(to_real(to_complex([0.0, 0.0])), [0.0, 0.0])


def test_idempotent_and_scale_invariant(rng):
    v = rng.standard_normal(64)
    once = power_normalize(v)
    assert np.allclose(power_normalize(once), once, atol=1e-12)
    assert np.allclose(l2_normalize(7.5 * v), l2_normalize(v), atol=1e-12)


def test_complex_roundtrip(rng):
    for _ in range(100):
        c = rng.standard_normal(6) + 1j * rng.standard_normal(6)
        assert np.array_equal(to_complex(to_real(c)), c)
