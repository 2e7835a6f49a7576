"""Spatial correlation across fluid-antenna ports and fading/noise sampling.

Noise convention: ``noise_var`` is the total complex variance, w ~ CN(0,
noise_var), so each real dimension carries ``noise_var / 2``. With
unit-energy constellations and unit channel gain the SNR is ``1 / noise_var``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import bessel_j0


def snr_db_to_noise_var(snr_db):
    return 1.0 / 10.0 ** (np.asarray(snr_db, dtype=float) / 10.0)


def noise_var_to_snr_db(noise_var):
    return -10.0 * np.log10(np.asarray(noise_var, dtype=float))


@dataclass(frozen=True)
class CorrelationMatrix:
    """Real symmetric port correlation R with a square-root factor A (A A^T ~ R).

    Negative eigenvalues (the Jakes matrix is numerically indefinite for
    many closely spaced ports) are clamped to zero before factoring.
    """

    entries: np.ndarray
    sqrt_factor: np.ndarray = field(repr=False)
    clamped: float = 0.0

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def from_entries(cls, entries) -> "CorrelationMatrix":
        R = np.array(entries, dtype=float)
        if R.ndim != 2 or R.shape[0] != R.shape[1]:
            raise ValueError("correlation matrix must be square")
        if not np.allclose(R, R.T, atol=1e-12):
            raise ValueError("correlation matrix must be symmetric")
        if not np.allclose(np.diag(R), 1.0, atol=1e-12):
            raise ValueError("correlation matrix must have a unit diagonal")
        evals, evecs = np.linalg.eigh(R)
        clamped = float(-evals[evals < 0].sum())
        A = evecs * np.sqrt(np.clip(evals, 0.0, None))
        R.setflags(write=False)
        A.setflags(write=False)
        return cls(R, A, clamped)

    @classmethod
    def identity(cls, n: int) -> "CorrelationMatrix":
        return cls.from_entries(np.eye(n))


def build_correlation(n_ports: int, fa_size: float) -> CorrelationMatrix:
    """Jakes correlation J0(2 pi (i - j) W / (N - 1)) for N ports spread over W wavelengths."""
    if n_ports < 2:
        raise ValueError(f"need at least 2 ports, got {n_ports}")
    if not fa_size > 0:
        raise ValueError(f"FA size must be positive, got {fa_size}")
    i = np.arange(n_ports)
    lag = i[:, None] - i[None, :]
    return CorrelationMatrix.from_entries(bessel_j0(2 * np.pi * lag * fa_size / (n_ports - 1)))


def _complex_normal(rng, shape, var):
    scale = np.sqrt(var / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


@dataclass(frozen=True)
class FadingSample:
    coefficients: np.ndarray
    sigma_h_sq: float = 1.0

    def __post_init__(self):
        if not np.all(np.isfinite(self.coefficients)):
            raise ValueError("fading coefficients must be finite")


def sample_channels(corr: CorrelationMatrix, n: int, rng, sigma_h_sq: float = 1.0) -> np.ndarray:
    """Draw ``n`` independent correlated channel rows, shape (n, N).

    Each row is h = h_tilde A^T where h_tilde has i.i.d. CN(0, sigma_h_sq)
    entries, so E[h^H h] = sigma_h_sq * R.
    """
    h_tilde = _complex_normal(rng, (n, corr.dim), sigma_h_sq)
    return h_tilde @ corr.sqrt_factor.T


def sample_channel(corr: CorrelationMatrix, sigma_h_sq: float, rng) -> FadingSample:
    if not sigma_h_sq > 0:
        raise ValueError("sigma_h_sq must be positive")
    return FadingSample(sample_channels(corr, 1, rng, sigma_h_sq)[0], sigma_h_sq)


def sample_noise(noise_var: float, rng, size=None):
    """Circular complex Gaussian noise with total variance ``noise_var``."""
    if not noise_var > 0:
        raise ValueError("noise variance must be positive")
    shape = () if size is None else size
    w = np.sqrt(noise_var / 2.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    return complex(w) if size is None else w
