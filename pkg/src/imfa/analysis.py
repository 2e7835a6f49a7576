"""Error-probability bounds, discrete-input capacity and EXIT measurements.

SNR enters every routine as ``noise_var``, the total complex noise
variance (SNR = 1 / noise_var). Bounds accept a scalar or an array of
noise variances and return a matching float or array.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.special import logsumexp

from .channel import CorrelationMatrix, sample_channels, sample_noise
from .conv import RscCode, WeightEnumerator, compute_wef
from .im import ImConfig, QamConstellation, build_constellation, compute_llrs_batch, indices_to_words
from .numerics import QuadratureRule, craig_integral, gauss_legendre_rule, rank_one_eigenvalue
from .simulation import transmit
from .turbo import TurboCode, constituent_decode, turbo_decode, turbo_encode

MAX_HYPOTHESES = 2**14


@dataclass(frozen=True)
class BoundSpec:
    scheme: str
    terms: int = 10
    w_max: int = 8
    z_max: int = 30
    n_nodes: int = 64

    def __post_init__(self):
        if self.scheme not in ("uncoded", "spc", "turbo"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if min(self.terms, self.w_max, self.z_max) < 1:
            raise ValueError("truncation limits must be at least 1")

    @property
    def rule(self) -> QuadratureRule:
        return gauss_legendre_rule(self.n_nodes)


@dataclass(frozen=True)
class CapacityEstimate:
    value: float
    mc_samples: int
    std_error: float


@dataclass(frozen=True)
class ExitPoint:
    i_a: float
    i_e: float


def _scalar_or_array(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


def pep_closed_form(mu, noise_var):
    """Rayleigh-averaged pairwise error probability for a rank-one difference."""
    mu = np.asarray(mu, dtype=float)
    s2 = np.asarray(noise_var, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        root = np.sqrt(np.where(mu > 0, mu / (mu + 4.0 * s2), 0.0))
    return _scalar_or_array(0.5 * (1.0 - root))


def _hypotheses(cfg: ImConfig, const: QamConstellation):
    """Port index, transmitted point and k-bit word for every (port, point)."""
    ports = np.repeat(np.arange(cfg.n_ports), cfg.mod_order)
    points = np.tile(np.arange(cfg.mod_order), cfg.n_ports)
    return ports, const.points[points], indices_to_words(ports, points, cfg, const)


def _pair_eigenvalues(cfg: ImConfig, corr, const: QamConstellation) -> np.ndarray:
    """mu(x, x_hat) for every ordered pair of IM hypotheses, shape (NM, NM).

    With x = s e_n and x_hat = s' e_n', delta^H R delta reduces to
    |s|^2 + |s'|^2 - 2 Re(conj(s) s') R[n, n'].
    """
    R = _corr_entries(corr, cfg.n_ports)
    ports, s, _ = _hypotheses(cfg, const)
    cross = np.real(np.conj(s)[:, None] * s[None, :]) * R[ports[:, None], ports[None, :]]
    mu = np.abs(s)[:, None] ** 2 + np.abs(s)[None, :] ** 2 - 2.0 * cross
    return np.clip(mu, 0.0, None)


def _corr_entries(corr, n_ports: int) -> np.ndarray:
    if corr is None:
        return np.eye(n_ports)
    R = corr.entries if isinstance(corr, CorrelationMatrix) else np.asarray(corr, dtype=float)
    if R.shape != (n_ports, n_ports):
        raise ValueError(f"correlation is {R.shape}, expected {(n_ports, n_ports)}")
    return R


def _hamming(words, mask=None):
    diff = words[:, None] ^ words[None, :]
    if mask is not None:
        diff = diff & mask
    out = np.zeros(diff.shape, dtype=np.int64)
    while np.any(diff):
        out += diff & 1
        diff = diff >> 1
    return out


def _guard(cfg: ImConfig):
    if cfg.n_hypotheses > MAX_HYPOTHESES:
        raise ValueError(f"N*M = {cfg.n_hypotheses} exceeds the exhaustive-sum limit {MAX_HYPOTHESES}")


def uncoded_union_bound(cfg: ImConfig, corr, noise_var, constellation: QamConstellation | None = None):
    """Union bound on the uncoded BER over all ordered pairs of IM vectors.

    ``corr`` may be None for a single forced port (N = 1).
    """
    _guard(cfg)
    const = constellation or build_constellation(cfg.mod_order)
    mu = _pair_eigenvalues(cfg, corr, const)
    _, _, words = _hypotheses(cfg, const)
    d = _hamming(words)
    off = d > 0
    mu, d = mu[off], d[off]
    s2 = np.atleast_1d(np.asarray(noise_var, dtype=float))
    if np.any(s2 <= 0):
        raise ValueError("noise variance must be positive")
    root = np.sqrt(mu[None, :] / (mu[None, :] + 4.0 * s2[:, None]))
    bound = (d * (1.0 - root)).sum(axis=1) / (2 * cfg.k * 2**cfg.k)
    bound = np.minimum(bound, 0.5)
    return float(bound[0]) if np.ndim(noise_var) == 0 else bound


def sequence_pep(delta_seq, corr_seq, noise_var, rule: QuadratureRule | None = None):
    """PEP between two IM sequences over independently faded intervals."""
    mus = [rank_one_eigenvalue(d, r) for d, r in zip(delta_seq, corr_seq, strict=True)]
    if not any(m > 0 for m in mus):
        return 0.5 if np.ndim(noise_var) == 0 else np.full(np.shape(noise_var), 0.5)
    return craig_integral(np.array(mus), noise_var, rule)


def zeta(d: int, p: float) -> float:
    """Probability that hard-decision decoding prefers a weight-d error path on a BSC(p)."""
    if d < 1:
        raise ValueError("path weight must be positive")
    out = sum(math.comb(d, j) * p**j * (1 - p) ** (d - j) for j in range(d // 2 + 1, d + 1))
    if d % 2 == 0:
        out += 0.5 * math.comb(d, d // 2) * (p * (1 - p)) ** (d // 2)
    return out


def spc_crossover(cfg: ImConfig, corr, noise_var, constellation: QamConstellation | None = None):
    """Effective crossover probability of the coded port bits.

    Averages PEP-weighted port-bit Hamming distance over the 2**k
    transmitted vectors and normalises by the SPC spectral efficiency k-1.
    Only pairs whose port bits differ contribute.
    """
    _guard(cfg)
    const = constellation or build_constellation(cfg.mod_order)
    mu = _pair_eigenvalues(cfg, corr, const)
    _, _, words = _hypotheses(cfg, const)
    port_mask = (cfg.n_ports - 1) << cfg.n_bits_sym
    d = _hamming(words, port_mask)
    off = d > 0
    mu, d = mu[off], d[off]
    s2 = np.atleast_1d(np.asarray(noise_var, dtype=float))
    pep = 0.5 * (1.0 - np.sqrt(mu[None, :] / (mu[None, :] + 4.0 * s2[:, None])))
    out = (d * pep).sum(axis=1) / ((cfg.k - 1) * 2**cfg.k)
    return float(out[0]) if np.ndim(noise_var) == 0 else out


def spc_ber_bound(code: RscCode, cfg: ImConfig, corr, noise_var, terms: int = 10,
                  constellation: QamConstellation | None = None, wef: dict[int, int] | None = None):
    """Hard-decision union bound sum_d a_d zeta(d) over the first ``terms`` WEF terms.

    Saturates at 1/2 once the port-bit crossover reaches 1/2.
    """
    if terms < 1:
        raise ValueError("terms must be at least 1")
    if wef is None:
        _, wef = compute_wef(code, 40)
    coeffs = sorted((d, a) for d, a in wef.items() if a)[:terms]
    p = np.atleast_1d(spc_crossover(cfg, corr, noise_var, constellation))
    out = np.empty_like(p)
    for i, pi in enumerate(p):
        out[i] = 0.5 if pi >= 0.5 else min(0.5, sum(a * zeta(d, pi) for d, a in coeffs))
    return float(out[0]) if np.ndim(noise_var) == 0 else out


def _position_factors(cfg: ImConfig, corr, noise_var, const, rule):
    """Per-bit-position Craig integrand, averaged over transmitted words.

    Returns (k, n_snr, n_nodes): entry j is the mean over x of
    (1 + mu(x, x xor e_j) / (4 s2 sin^2 t))^-1, e_j flipping bit j (MSB first).
    """
    mu = _pair_eigenvalues(cfg, corr, const)
    _, _, words = _hypotheses(cfg, const)
    index = np.empty(cfg.n_hypotheses, dtype=np.int64)
    index[words] = np.arange(cfg.n_hypotheses)
    s2 = np.atleast_1d(np.asarray(noise_var, dtype=float))
    sin2 = np.sin(rule.nodes) ** 2
    out = np.empty((cfg.k, len(s2), len(rule.nodes)))
    rows = index[np.arange(cfg.n_hypotheses)]
    for j in range(cfg.k):
        flip = 1 << (cfg.k - 1 - j)
        cols = index[np.arange(cfg.n_hypotheses) ^ flip]
        m = mu[rows, cols]
        out[j] = (1.0 / (1.0 + m[None, None, :] / (4.0 * s2[:, None, None] * sin2[None, :, None]))).mean(axis=2)
    return out


def turbo_ber_bound(turbo_wef: WeightEnumerator, cfg: ImConfig, corr, noise_var, block_len: int,
                    constellation: QamConstellation | None = None, rule: QuadratureRule | None = None):
    """Uniform-interleaver union bound on the turbo-coded BER.

    Each term (w, u=w, z) is mapped to a sequence PEP with w intervals
    carrying one systematic-bit error and z intervals carrying one parity
    error, every interval independently faded. The per-interval Craig
    factor is averaged over transmitted words and over the systematic
    (resp. parity) positions of the IM word ``[u, p1, p2]``.
    """
    if not turbo_wef.counts:
        raise ValueError("empty weight enumerator")
    if turbo_wef.block_len != block_len:
        raise ValueError(f"enumerator length {turbo_wef.block_len} != {block_len}")
    b = turbo_wef.input_arity
    if cfg.k != b + 2:
        raise ValueError(f"IM word carries {cfg.k} bits, turbo code emits {b + 2}")
    _guard(cfg)
    const = constellation or build_constellation(cfg.mod_order)
    rule = rule or gauss_legendre_rule()
    f = _position_factors(cfg, corr, noise_var, const, rule)
    f_sys, f_par = f[:b].mean(axis=0), f[b:].mean(axis=0)
    total = np.zeros(f.shape[1])
    log_sys, log_par = np.log(f_sys), np.log(f_par)
    for (w, _, z), count in turbo_wef.counts.items():
        if w == 0 or count == 0:
            continue
        integrand = np.exp(w * log_sys + z * log_par)
        total += w * count * (integrand @ rule.weights) / np.pi
    out = np.minimum(total / (b * block_len), 0.5)
    return float(out[0]) if np.ndim(noise_var) == 0 else out


def capacity_mc(cfg: ImConfig, corr, noise_var: float, n_samples: int, rng,
                constellation: QamConstellation | None = None) -> CapacityEstimate:
    """Discrete-input capacity by Monte Carlo, stratified over the N*M hypotheses.

    For each hypothesis x the equivocation term
    log2 sum_x' exp(-(|y - h x'|^2 - |w|^2) / noise_var) is averaged
    over ``n_samples`` joint channel and noise draws.
    """
    if n_samples < 1000:
        raise ValueError("n_samples must be at least 1000")
    if not noise_var > 0:
        raise ValueError("noise variance must be positive")
    const = constellation or build_constellation(cfg.mod_order)
    ports, s, _ = _hypotheses(cfg, const)
    n_hyp = cfg.n_hypotheses
    if corr is None:
        corr = CorrelationMatrix.identity(cfg.n_ports)
    means = np.empty(n_hyp)
    variances = np.empty(n_hyp)
    for i in range(n_hyp):
        h = sample_channels(corr, n_samples, rng)
        w = sample_noise(noise_var, rng, n_samples)
        y = h[:, ports[i]] * s[i] + w
        r = h[:, ports] * s[None, :]  # (n, NM)
        a = -(np.abs(y[:, None] - r) ** 2 - np.abs(w)[:, None] ** 2) / noise_var
        e = logsumexp(a, axis=1) / math.log(2.0)
        means[i] = e.mean()
        variances[i] = e.var(ddof=1)
    value = cfg.k - means.mean()
    std = math.sqrt(variances.sum() / n_samples) / n_hyp
    return CapacityEstimate(float(value), n_samples * n_hyp, std)


_GH_X, _GH_W = np.polynomial.hermite_e.hermegauss(80)
_GH_W = _GH_W / _GH_W.sum()


def j_function(sigma):
    """Mutual information between a bit and its consistent Gaussian LLR of std ``sigma``."""
    sigma = np.asarray(sigma, dtype=float)
    s = sigma[..., None]
    llr = s**2 / 2 + s * _GH_X
    val = 1.0 - (np.logaddexp(0.0, -llr) / math.log(2.0)) @ _GH_W
    return _scalar_or_array(np.where(sigma > 0, val, 0.0))


def j_inverse(mi: float) -> float:
    if not 0.0 <= mi <= 1.0:
        raise ValueError(f"mutual information {mi} outside [0, 1]")
    if mi <= 0.0:
        return 0.0
    if mi >= 1.0 - 1e-9:
        return 60.0
    return float(optimize.brentq(lambda s: j_function(s) - mi, 1e-6, 60.0, xtol=1e-10))


def _bit_table(b: int) -> np.ndarray:
    x = np.arange(2**b)
    return ((x[:, None] >> np.arange(b - 1, -1, -1)) & 1).astype(float)


def extrinsic_information(probs) -> float:
    """b minus the mean entropy (bits) of the per-position extrinsic tables."""
    probs = np.asarray(probs, dtype=float)
    b = math.log2(probs.shape[1])
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.where(probs > 0, probs * np.log2(probs), 0.0).sum(axis=1)
    return float(np.clip(b - h.mean(), 0.0, b))


def _turbo_block(tc: TurboCode, cfg: ImConfig, corr, noise_var, const, rng):
    if cfg.k != tc.k + 2:
        raise ValueError(f"IM word carries {cfg.k} bits, turbo code emits {tc.k + 2}")
    u = rng.integers(0, 2**tc.k, tc.block_len)
    y, h = transmit(turbo_encode(tc, u), cfg, const, corr, noise_var, rng)
    return u, compute_llrs_batch(y, h, cfg, const, noise_var)


def exit_curve(tc: TurboCode, cfg: ImConfig, corr, noise_var, i_a_grid, n_blocks: int, rng,
               constellation: QamConstellation | None = None) -> list[ExitPoint]:
    """Constituent-decoder transfer curve I_E(I_A) with Gaussian a priori LLRs.

    I_A is per information word in [0, b]; each of the b bits gets a
    consistent Gaussian prior carrying I_A / b bits.
    """
    b = tc.k
    grid = np.asarray(i_a_grid, dtype=float)
    if np.any((grid < 0) | (grid > b)):
        raise ValueError(f"a priori information must lie in [0, {b}]")
    const = constellation or build_constellation(cfg.mod_order)
    bits = _bit_table(b)
    acc = np.zeros(len(grid))
    for _ in range(n_blocks):
        u, llr = _turbo_block(tc, cfg, corr, noise_var, const, rng)
        u_bits = bits[u]
        for g, ia in enumerate(grid):
            sigma = j_inverse(ia / b)
            prior = sigma**2 / 2 * (2 * u_bits - 1) + sigma * rng.standard_normal(u_bits.shape)
            apriori = prior @ bits.T
            apriori -= logsumexp(apriori, axis=1, keepdims=True)
            _, ext = constituent_decode(tc.constituent, llr[:, :b], llr[:, b], apriori)
            acc[g] += extrinsic_information(np.exp(ext))
    return [ExitPoint(float(ia), float(ie)) for ia, ie in zip(grid, acc / n_blocks)]


def exit_trajectory(tc: TurboCode, cfg: ImConfig, corr, noise_var, n_iters: int, rng,
                    constellation: QamConstellation | None = None) -> list[tuple[int, int, float]]:
    """Measured decoder trajectory on one simulated block.

    Returns ``(iteration, decoder, I_E)`` triples, starting with
    ``(0, 0, 0.0)`` for the empty prior of the first half-iteration.
    """
    const = constellation or build_constellation(cfg.mod_order)
    _, llr = _turbo_block(tc, cfg, corr, noise_var, const, rng)
    _, states = turbo_decode(tc, llr, n_iters, trace=True)
    return [(0, 0, 0.0)] + [(s.iteration, s.decoder, extrinsic_information(s.probs)) for s in states]
