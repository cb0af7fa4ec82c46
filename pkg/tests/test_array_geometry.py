import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from abpmimo.array_geometry import (
    UlaConfig,
    angle_to_spatial_freq,
    beam_gain,
    half_power_beamwidth,
    spatial_freq_to_angle,
    steering_vector,
    wrap_phase,
)
from abpmimo.errors import ConfigurationError, DomainError

HALF = UlaConfig(8)


@pytest.mark.parametrize("angle, freq", [(0.0, 0.0), (np.pi / 2, np.pi), (np.pi / 6, np.pi / 2)])
def test_angle_frequency_examples(angle, freq):
    assert angle_to_spatial_freq(angle, HALF) == pytest.approx(freq, abs=1e-15)
    assert spatial_freq_to_angle(freq, HALF) == pytest.approx(angle, abs=1e-15)


def test_conversion_domain_errors():
    with pytest.raises(DomainError):
        angle_to_spatial_freq(2.0, HALF)
    with pytest.raises(DomainError):
        spatial_freq_to_angle(3.5, HALF)


@pytest.mark.parametrize("n, d", [(1, 0.5), (8, 0.0), (8, 1.5), (2.5, 0.5)])
def test_config_validation(n, d):
    with pytest.raises(ConfigurationError):
        UlaConfig(n, d)


def test_round_trip_dense_grid():
    theta = np.linspace(-np.pi / 2, np.pi / 2, 100_001)
    for d in (0.25, 0.5, 1.0):
        cfg = UlaConfig(4, d)
        assert np.max(np.abs(spatial_freq_to_angle(angle_to_spatial_freq(theta, cfg), cfg) - theta)) < 1e-7
    # away from endfire arcsin is well conditioned
    inner = theta[np.abs(theta) < 1.5]
    assert np.max(np.abs(spatial_freq_to_angle(angle_to_spatial_freq(inner, HALF), HALF) - inner)) < 1e-12


def test_steering_vector_examples():
    assert np.allclose(steering_vector(0.0, 4), 0.5 * np.ones(4), atol=1e-15)
    a = steering_vector(np.pi / 8, HALF)
    assert abs(np.vdot(a, a)) ** 2 == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(np.abs(a), 1 / np.sqrt(8))


@given(st.floats(-10, 10), st.integers(2, 128))
def test_steering_vector_unit_norm(freq, n):
    a = steering_vector(freq, n)
    assert abs(np.linalg.norm(a) - 1.0) < 1e-12
    assert np.allclose(a[1] / a[0], np.exp(1j * freq))


def test_steering_matrix_columns():
    freqs = np.array([0.1, -0.7, 2.0])
    m = steering_vector(freqs, HALF)
    assert m.shape == (8, 3)
    for j, f in enumerate(freqs):
        assert np.allclose(m[:, j], steering_vector(f, HALF))


def test_beam_gain_examples():
    assert beam_gain(0.3, 0.3, HALF) == 1.0
    assert beam_gain(2 * np.pi / 8, 0.0, HALF) == pytest.approx(0.0, abs=1e-30)
    brute = abs(np.vdot(steering_vector(np.pi / 16, HALF), steering_vector(0.0, HALF))) ** 2
    assert beam_gain(np.pi / 16, 0.0, HALF) == pytest.approx(brute, abs=1e-12)


def test_beam_gain_limit_branch_near_2pi():
    assert beam_gain(2 * np.pi, 0.0, HALF) == 1.0
    assert beam_gain(1e-11, 0.0, HALF) == 1.0


def test_beam_gain_matches_inner_product_random(rng):
    mu = rng.uniform(-2 * np.pi, 2 * np.pi, 10_000)
    nu = rng.uniform(-2 * np.pi, 2 * np.pi, 10_000)
    ns = rng.integers(2, 65, 10_000)
    for n in np.unique(ns):
        sel = ns == n
        k = np.arange(n)
        inner = np.exp(1j * np.outer(mu[sel] - nu[sel], k)).sum(axis=1) / n
        brute = np.abs(inner) ** 2
        assert np.max(np.abs(beam_gain(mu[sel], nu[sel], int(n)) - brute)) < 1e-10


@given(st.floats(-7, 7), st.floats(-7, 7), st.integers(2, 64))
def test_beam_gain_symmetric_and_bounded(a, b, n):
    g = beam_gain(a, b, n)
    assert 0.0 <= g <= 1.0
    assert g == pytest.approx(beam_gain(b, a, n), abs=1e-12)


@given(st.floats(-50, 50))
def test_wrap_phase_range(x):
    w = wrap_phase(x)
    assert -np.pi <= w < np.pi
    assert np.isclose(np.exp(1j * w), np.exp(1j * x))


def test_half_power_beamwidth_rule_of_thumb():
    width = np.degrees(half_power_beamwidth(UlaConfig(16)))
    assert width == pytest.approx(102.0 / 16, rel=0.15)
