import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from riscovert.signals import (
    QPSK_POINTS,
    NoiseModel,
    add_noise,
    dbm_to_watts,
    from_iq,
    qpsk_frame,
    scale_to_power,
    to_iq,
    watts_to_dbm,
)


@pytest.mark.parametrize("dbm, watts", [(30, 1.0), (0, 1e-3), (20, 0.1)])
def test_dbm_to_watts(dbm, watts):
    assert dbm_to_watts(dbm) == pytest.approx(watts, rel=1e-12)


def test_minus_inf_dbm_is_zero_watts():
    assert dbm_to_watts(float("-inf")) == 0.0


@given(st.floats(-50, 50))
def test_dbm_round_trip(p):
    assert abs(watts_to_dbm(dbm_to_watts(p)) - p) < 1e-9


def test_qpsk_unit_magnitude_and_power():
    frame = qpsk_frame(16, 0)
    assert frame.shape == (16,)
    np.testing.assert_allclose(np.abs(frame), 1.0, atol=1e-15)
    assert np.mean(np.abs(frame) ** 2) == pytest.approx(1.0, abs=1e-15)


def test_qpsk_symbol_frequencies_uniform():
    samples = qpsk_frame(100_000, 7)
    counts = np.array([np.sum(np.isclose(samples, p)) for p in QPSK_POINTS])
    assert counts.sum() == 100_000
    np.testing.assert_allclose(counts / 1e5, 0.25, atol=0.02)
    assert stats.chisquare(counts).pvalue > 1e-3


def test_qpsk_is_seed_deterministic():
    np.testing.assert_array_equal(qpsk_frame(16, 99), qpsk_frame(16, 99))
    assert not np.array_equal(qpsk_frame(16, 99), qpsk_frame(16, 100))


def test_qpsk_rejects_empty_frame():
    with pytest.raises(ValueError):
        qpsk_frame(0, 0)


def test_scale_to_power():
    frame = qpsk_frame(16, 1)
    np.testing.assert_allclose(scale_to_power(frame, 30), frame, rtol=1e-12)
    np.testing.assert_allclose(scale_to_power(frame, 20), frame * np.sqrt(0.1), rtol=1e-12)
    np.testing.assert_array_equal(scale_to_power(np.zeros(16, complex), 25), np.zeros(16))


def test_scale_to_power_preserves_direction(rng):
    frame = rng.standard_normal(16) + 1j * rng.standard_normal(16)
    out = scale_to_power(frame, 17.0)
    assert np.mean(np.abs(out) ** 2) == pytest.approx(dbm_to_watts(17.0), rel=1e-12)
    np.testing.assert_allclose(np.angle(out), np.angle(frame), atol=1e-12)


def test_add_noise_zero_variance_is_identity():
    frame = qpsk_frame(16, 2)
    np.testing.assert_array_equal(add_noise(frame, NoiseModel(0.0), 3), frame)


def test_add_noise_moments():
    var = 2.5
    n = add_noise(np.zeros(100_000, complex), NoiseModel(var), 4)
    assert np.mean(np.abs(n) ** 2) == pytest.approx(var, rel=0.05)
    assert np.var(n.real) == pytest.approx(var / 2, rel=0.05)
    assert np.var(n.imag) == pytest.approx(var / 2, rel=0.05)


def test_independent_noise_streams_uncorrelated():
    a = add_noise(np.zeros(100_000, complex), NoiseModel(1.0), 10)
    b = add_noise(np.zeros(100_000, complex), NoiseModel(1.0), 11)
    corr = np.abs(np.vdot(a, b)) / np.sqrt(np.vdot(a, a).real * np.vdot(b, b).real)
    assert corr < 0.02


def test_noise_model_rejects_negative_variance():
    with pytest.raises(ValueError):
        NoiseModel(-1.0)


def test_iq_round_trip(rng):
    frame = rng.standard_normal((3, 16)) + 1j * rng.standard_normal((3, 16))
    iq = to_iq(frame)
    assert iq.shape == (3, 2, 16)
    np.testing.assert_array_equal(from_iq(iq), frame)
