"""Index-modulation mapping, ML detection and soft demapping.

An IM symbol carries ``k = log2(N) + log2(M)`` bits: the leading
``log2(N)`` bits pick the active port (natural binary, MSB first) and the
trailing ``log2(M)`` bits pick a Gray-labelled QAM point.

Public single-symbol helpers use 1-based port/symbol numbers (port 1..N);
the vectorised ``*_indices`` helpers work with 0-based integer arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

LLR_CLIP = 50.0


def _log2_exact(value: int, name: str) -> int:
    if value < 1 or value & (value - 1):
        raise ValueError(f"{name} must be a power of two, got {value}")
    return value.bit_length() - 1


@dataclass(frozen=True)
class ImConfig:
    n_ports: int
    mod_order: int

    def __post_init__(self):
        _log2_exact(self.n_ports, "n_ports")
        if _log2_exact(self.mod_order, "mod_order") < 1:
            raise ValueError("mod_order must be at least 2")

    @property
    def n_bits_port(self) -> int:
        return _log2_exact(self.n_ports, "n_ports")

    @property
    def n_bits_sym(self) -> int:
        return _log2_exact(self.mod_order, "mod_order")

    @property
    def k(self) -> int:
        return self.n_bits_port + self.n_bits_sym

    @property
    def n_hypotheses(self) -> int:
        return self.n_ports * self.mod_order


@dataclass(frozen=True)
class QamConstellation:
    """Unit-energy QAM points with a Gray labelling.

    ``labels[i]`` is the bit word of ``points[i]``; ``index_of_label`` is
    its inverse.
    """

    points: np.ndarray
    labels: np.ndarray
    index_of_label: np.ndarray

    @property
    def order(self) -> int:
        return len(self.points)

    @property
    def n_bits(self) -> int:
        return self.order.bit_length() - 1

    def by_label(self) -> np.ndarray:
        """Points reordered so that entry ``w`` is the point labelled ``w``."""
        return self.points[self.index_of_label]


def _gray_pam(n_bits):
    levels = 2 * np.arange(2**n_bits) - (2**n_bits - 1)
    i = np.arange(2**n_bits)
    return levels.astype(float), i ^ (i >> 1)


def build_constellation(mod_order: int) -> QamConstellation:
    """BPSK for M=2, square QAM for even log2(M), rectangular QAM otherwise."""
    m = _log2_exact(mod_order, "mod_order")
    if m < 1 or m > 10:
        raise ValueError(f"unsupported modulation order {mod_order}")
    if m == 1:
        points = np.array([1.0 + 0j, -1.0 + 0j])
        labels = np.array([0, 1])
    else:
        bits_i = (m + 1) // 2
        bits_q = m - bits_i
        lev_i, gray_i = _gray_pam(bits_i)
        lev_q, gray_q = _gray_pam(bits_q)
        points = (lev_i[:, None] + 1j * lev_q[None, :]).ravel()
        labels = ((gray_i[:, None] << bits_q) | gray_q[None, :]).ravel()
        points = points / np.sqrt(np.mean(np.abs(points) ** 2))
    index_of_label = np.empty(mod_order, dtype=int)
    index_of_label[labels] = np.arange(mod_order)
    for arr in (points, labels, index_of_label):
        arr.setflags(write=False)
    return QamConstellation(points, labels, index_of_label)


@dataclass(frozen=True)
class ImSymbol:
    port_index: int  # 1..N
    symbol_index: int  # 1..M
    sparse_vector: np.ndarray

    def __post_init__(self):
        if np.count_nonzero(self.sparse_vector) != 1:
            raise ValueError("IM symbol must have exactly one active port")


def bits_to_int(bits) -> int:
    out = 0
    for b in bits:
        out = (out << 1) | int(b)
    return out


def int_to_bits(value: int, width: int) -> list[int]:
    return [(value >> (width - 1 - i)) & 1 for i in range(width)]


def im_map(bits, cfg: ImConfig, constellation: QamConstellation) -> ImSymbol:
    bits = list(bits)
    if len(bits) != cfg.k:
        raise ValueError(f"expected {cfg.k} bits, got {len(bits)}")
    port = bits_to_int(bits[: cfg.n_bits_port])
    point = int(constellation.index_of_label[bits_to_int(bits[cfg.n_bits_port :])])
    x = np.zeros(cfg.n_ports, dtype=complex)
    x[port] = constellation.points[point]
    return ImSymbol(port + 1, point + 1, x)


def im_demap(sym: ImSymbol, cfg: ImConfig, constellation: QamConstellation) -> list[int]:
    label = int(constellation.labels[sym.symbol_index - 1])
    return int_to_bits(sym.port_index - 1, cfg.n_bits_port) + int_to_bits(label, cfg.n_bits_sym)


def words_to_indices(words, cfg: ImConfig, constellation: QamConstellation):
    """Map integer k-bit words to 0-based (port, point) index arrays."""
    words = np.asarray(words)
    ports = words >> cfg.n_bits_sym
    points = constellation.index_of_label[words & (cfg.mod_order - 1)]
    return ports, points


def indices_to_words(ports, points, cfg: ImConfig, constellation: QamConstellation):
    return (np.asarray(ports) << cfg.n_bits_sym) | constellation.labels[np.asarray(points)]


def _metrics(y, h, constellation):
    """Squared distances |y - h_n s_m|^2 with shape (..., N, M)."""
    y = np.asarray(y)
    h = np.asarray(h)
    r = h[..., :, None] * constellation.points
    return np.abs(y[..., None, None] - r) ** 2


def ml_detect_indices(y, h, constellation: QamConstellation):
    """Joint ML (port, point) decision, 0-based; ties go to the smallest (n, m)."""
    d = _metrics(y, h, constellation)
    flat = d.reshape(d.shape[:-2] + (-1,)).argmin(axis=-1)
    return np.divmod(flat, constellation.order)


def ml_detect(y, h, cfg: ImConfig, constellation: QamConstellation) -> tuple[int, int]:
    coeffs = h.coefficients if hasattr(h, "coefficients") else h
    n, m = ml_detect_indices(complex(y), np.asarray(coeffs), constellation)
    return int(n) + 1, int(m) + 1


def mlse_detect(y_seq, h_seq, cfg: ImConfig, constellation: QamConstellation) -> list[tuple[int, int]]:
    """Sequence ML detection over independent fading intervals.

    The sequence metric is a sum of per-interval terms with no coupling, so
    it is minimised interval by interval.
    """
    if len(y_seq) != len(h_seq):
        raise ValueError("y and h sequences differ in length")
    h = np.array([getattr(x, "coefficients", x) for x in h_seq])
    n, m = ml_detect_indices(np.asarray(y_seq, dtype=complex), h, constellation)
    return [(int(a) + 1, int(b) + 1) for a, b in zip(n, m)]


@dataclass(frozen=True)
class LlrVector:
    port_llrs: np.ndarray
    symbol_llrs: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.port_llrs, self.symbol_llrs])


_MASK_CACHE: dict = {}


def _bit_masks(cfg: ImConfig, constellation: QamConstellation) -> np.ndarray:
    """(k, N*M) boolean table; row j marks hypotheses whose j-th bit is 1."""
    key = (cfg.n_ports, cfg.mod_order)
    if key not in _MASK_CACHE:
        ports = np.repeat(np.arange(cfg.n_ports), cfg.mod_order)
        points = np.tile(np.arange(cfg.mod_order), cfg.n_ports)
        words = indices_to_words(ports, points, cfg, constellation)
        shifts = np.arange(cfg.k - 1, -1, -1)
        _MASK_CACHE[key] = ((words[None, :] >> shifts[:, None]) & 1).astype(bool)
    return _MASK_CACHE[key]


def compute_llrs_batch(y, h, cfg: ImConfig, constellation: QamConstellation, noise_var: float) -> np.ndarray:
    """Exact per-bit LLRs log P(b=1|y)/P(b=0|y), shape (..., k), clipped to +-50."""
    if not noise_var > 0:
        raise ValueError("noise variance must be positive")
    d = -_metrics(y, h, constellation) / noise_var
    d = d.reshape(d.shape[:-2] + (-1,))
    ones = _bit_masks(cfg, constellation)
    out = np.empty(d.shape[:-1] + (cfg.k,))
    for j in range(cfg.k):
        out[..., j] = logsumexp(d[..., ones[j]], axis=-1) - logsumexp(d[..., ~ones[j]], axis=-1)
    return np.clip(out, -LLR_CLIP, LLR_CLIP)


def compute_llrs(y, h, cfg: ImConfig, constellation: QamConstellation, noise_var: float) -> LlrVector:
    coeffs = np.asarray(getattr(h, "coefficients", h))
    llr = compute_llrs_batch(complex(y), coeffs, cfg, constellation, noise_var)
    return LlrVector(llr[: cfg.n_bits_port], llr[cfg.n_bits_port :])
