"""Special functions, quadrature, and the rank-one PEP kernels."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre rule on the open interval (0, pi/2)."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if len(self.nodes) < 16 or len(self.nodes) != len(self.weights):
            raise ValueError("quadrature rule needs at least 16 matching nodes/weights")


@lru_cache(maxsize=8)
def gauss_legendre_rule(n_nodes: int = 64) -> QuadratureRule:
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    half = np.pi / 4
    nodes = half * (x + 1.0)
    weights = half * w
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(nodes, weights)


def _check_finite(x):
    if not np.all(np.isfinite(x)):
        raise ValueError(f"non-finite argument: {x!r}")


def bessel_j0(x):
    """Zero-order Bessel function of the first kind."""
    _check_finite(x)
    return special.j0(x)


def gaussian_q(x):
    """Gaussian tail probability Q(x) = P(N(0,1) > x)."""
    x = np.asarray(x, dtype=float)
    if np.any(np.isnan(x)):
        raise ValueError("Q(x) undefined for NaN")
    out = special.ndtr(-x)
    return float(out) if out.ndim == 0 else out


def craig_integral(factors, noise_var, rule: QuadratureRule | None = None):
    """Evaluate (1/pi) * int_0^{pi/2} prod_l (1 + mu_l / (4 s2 sin^2 t))^-1 dt.

    ``factors`` holds the rank-one eigenvalues mu_l; a trailing axis of a 2-D
    array is treated as the product index so several sequences can be
    evaluated at once. ``noise_var`` may be an array broadcast against the
    leading axis.
    """
    mu = np.asarray(factors, dtype=float)
    if mu.size == 0 or mu.shape[-1] == 0:
        raise ValueError("craig_integral needs at least one factor")
    if np.any(mu < 0):
        raise ValueError("eigenvalue factors must be non-negative")
    s2 = np.asarray(noise_var, dtype=float)
    if np.any(s2 <= 0):
        raise ValueError("noise variance must be positive")
    rule = rule or gauss_legendre_rule()
    sin2 = np.sin(rule.nodes) ** 2
    # (..., L, Q)
    ratio = mu[..., None] / (4.0 * s2[..., None, None] * sin2)
    log_integrand = -np.log1p(ratio).sum(axis=-2)
    val = np.exp(log_integrand) @ rule.weights / np.pi
    return float(val) if np.ndim(val) == 0 else val


def rank_one_eigenvalue(delta, corr) -> float:
    """Sole non-zero eigenvalue of delta delta^H R, computed as delta^H R delta."""
    delta = np.asarray(delta, dtype=complex)
    R = corr.entries if hasattr(corr, "entries") else np.asarray(corr)
    if delta.shape != (R.shape[0],):
        raise ValueError(f"delta has length {delta.shape}, correlation is {R.shape}")
    return max(float(np.real(np.conj(delta) @ R @ delta)), 0.0)
