import math

import numpy as np
import pytest

from imfa.channel import (CorrelationMatrix, build_correlation, noise_var_to_snr_db, sample_channel,
                          sample_channels, sample_noise, snr_db_to_noise_var)
from imfa.numerics import gaussian_q


def test_two_port_half_wavelength():
    R = build_correlation(2, 0.5).entries
    series = sum((-math.pi**2 / 4) ** k / math.factorial(k) ** 2 for k in range(40))
    assert R[0, 1] == pytest.approx(series, abs=1e-13)
    assert R[0, 1] == pytest.approx(-0.3042421776801, abs=1e-10)


def test_sixteen_ports_adjacent_correlation():
    R = build_correlation(16, 0.4).entries
    x = 2 * math.pi * 0.4 / 15
    series = sum((-x * x / 4) ** k / math.factorial(k) ** 2 for k in range(40))
    assert R[0, 1] == pytest.approx(series, abs=1e-13)
    assert R[0, 1] == pytest.approx(0.992988, abs=1e-5)


@pytest.mark.parametrize("n", [2, 4, 16, 64, 128])
@pytest.mark.parametrize("w", [0.12, 0.4, 1.0, 5.0])
def test_correlation_shape_and_factor(n, w):
    corr = build_correlation(n, w)
    R, A = corr.entries, corr.sqrt_factor
    assert np.array_equal(R, R.T)
    assert np.all(np.diag(R) == 1.0)
    assert np.linalg.norm(A @ A.T - R) <= 1e-8 + corr.clamped


def test_correlation_rejects_bad_input():
    with pytest.raises(ValueError):
        build_correlation(1, 0.5)
    with pytest.raises(ValueError):
        build_correlation(4, 0.0)
    with pytest.raises(ValueError):
        CorrelationMatrix.from_entries([[1.0, 0.2], [0.3, 1.0]])
    with pytest.raises(ValueError):
        CorrelationMatrix.from_entries([[2.0, 0.0], [0.0, 1.0]])


def test_identity_covariance():
    rng = np.random.default_rng(0)
    h = sample_channels(CorrelationMatrix.identity(4), 10**5, rng)
    cov = h.conj().T @ h / len(h)
    assert np.max(np.abs(cov - np.eye(4))) < 0.02


def test_correlated_covariance():
    corr = build_correlation(4, 0.12)
    h = sample_channels(corr, 10**5, np.random.default_rng(1))
    cov = h.conj().T @ h / len(h)
    c01 = cov[0, 1] / math.sqrt(cov[0, 0].real * cov[1, 1].real)
    assert abs(c01 - corr.entries[0, 1]) < 0.02


def test_sampling_is_seeded():
    corr = build_correlation(8, 1.0)
    a = sample_channel(corr, 1.0, np.random.default_rng(5))
    b = sample_channel(corr, 1.0, np.random.default_rng(5))
    assert np.array_equal(a.coefficients, b.coefficients)
    assert sample_noise(0.3, np.random.default_rng(5)) == sample_noise(0.3, np.random.default_rng(5))


def test_noise_moments():
    rng = np.random.default_rng(2)
    w = sample_noise(1.0, rng, 10**6)
    assert np.mean(np.abs(w) ** 2) == pytest.approx(1.0, abs=0.01)
    assert abs(w.mean()) < 0.005
    assert np.var(sample_noise(0.5, rng, 10**6).real) == pytest.approx(0.25, abs=0.01)
    with pytest.raises(ValueError):
        sample_noise(0.0, rng)


def test_snr_conversion_round_trip():
    assert snr_db_to_noise_var(10.0) == pytest.approx(0.1)
    assert noise_var_to_snr_db(snr_db_to_noise_var(17.3)) == pytest.approx(17.3)


def test_conditional_pairwise_error_matches_q():
    # fixed h, fixed pair: P(|y - h x'| < |y - h x|) = Q(sqrt(|h delta|^2 / (2 noise_var)))
    rng = np.random.default_rng(9)
    h = np.array([0.8 - 0.3j, 0.2 + 0.5j])
    x, x_hat = np.array([1.0, 0.0]), np.array([0.0, -1.0])
    nv = 0.4
    n = 10**6
    y = h @ x + sample_noise(nv, rng, n)
    errs = np.abs(y - h @ x_hat) < np.abs(y - h @ x)
    p = errs.mean()
    se = math.sqrt(p * (1 - p) / n)
    d2 = abs(h @ (x - x_hat)) ** 2
    assert abs(p - gaussian_q(math.sqrt(d2 / (2 * nv)))) < 3 * se
