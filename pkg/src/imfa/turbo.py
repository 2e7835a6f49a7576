"""Parallel-concatenated RSC (turbo) codes with a symbol interleaver.

Two identical rate b/(b+1) constituents see the same b-bit information
words, the second in interleaved order. Each transmitted word is
``[u_1..u_b, p1, p2]``. Decoding is symbol-level log-MAP (BCJR) with
extrinsic exchange; LLRs follow the ``log P(1) / P(0)`` convention used by
the soft demapper.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .conv import RscCode, WeightEnumerator, encode_words


@dataclass(frozen=True)
class Interleaver:
    """Permutation of symbol positions: output position l reads input ``perm[l]``."""

    perm: np.ndarray
    seed: int | None = None
    inverse: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        perm = np.asarray(self.perm, dtype=np.int64)
        if perm.ndim != 1 or not np.array_equal(np.sort(perm), np.arange(len(perm))):
            raise ValueError("interleaver must be a permutation of 0..L-1")
        inv = np.empty_like(perm)
        inv[perm] = np.arange(len(perm))
        perm.setflags(write=False)
        inv.setflags(write=False)
        object.__setattr__(self, "perm", perm)
        object.__setattr__(self, "inverse", inv)

    @property
    def length(self) -> int:
        return len(self.perm)

    @classmethod
    def random(cls, length: int, seed: int) -> "Interleaver":
        if length < 1:
            raise ValueError("interleaver length must be positive")
        return cls(np.random.default_rng(seed).permutation(length), seed)

    @classmethod
    def identity(cls, length: int) -> "Interleaver":
        return cls(np.arange(length))

    def apply(self, x):
        return np.asarray(x)[self.perm]

    def invert(self, x):
        return np.asarray(x)[self.inverse]


@dataclass(frozen=True)
class TurboCode:
    constituent: RscCode
    interleaver: Interleaver

    @property
    def k(self) -> int:
        return self.constituent.input_arity

    @property
    def block_len(self) -> int:
        return self.interleaver.length

    @property
    def rate(self) -> tuple[int, int]:
        return self.k, self.k + 2


@dataclass(frozen=True)
class ExtrinsicState:
    """Extrinsic symbol probabilities (L, 2**b) leaving one constituent decoder.

    ``decoder`` is 1 or 2; tables from decoder 2 are stored in natural
    (deinterleaved) order.
    """

    iteration: int
    decoder: int
    probs: np.ndarray


def turbo_encode(tc: TurboCode, info_words) -> np.ndarray:
    """Encode L info words of b bits into L words of b+2 bits ``[u, p1, p2]``."""
    u = np.asarray(info_words, dtype=np.int64)
    if u.shape != (tc.block_len,):
        raise ValueError(f"expected {tc.block_len} info words, got shape {u.shape}")
    if np.any((u < 0) | (u >= 2**tc.k)):
        raise ValueError("info word out of range")
    c1, _ = encode_words(tc.constituent, u)
    c2, _ = encode_words(tc.constituent, tc.interleaver.apply(u))
    p1 = c1 & 1
    p2 = tc.interleaver.invert(c2 & 1)
    return (u << 2) | (p1 << 1) | p2


@njit(cache=True)
def _maxstar(a, b, max_log):
    if a == -np.inf:
        return b
    if b == -np.inf:
        return a
    if max_log:
        return max(a, b)
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


@njit(cache=True)
def _bcjr(next_state, parity, sys_metric, par_llr, apriori, max_log):
    """Symbol-level log-MAP; returns unnormalised log APP per (step, input)."""
    L, X = sys_metric.shape
    S = next_state.shape[0]
    ninf = -np.inf
    gamma = np.empty((L, S, X))
    for t in range(L):
        for s in range(S):
            for x in range(X):
                gamma[t, s, x] = sys_metric[t, x] + apriori[t, x] + parity[s, x] * par_llr[t]
    alpha = np.full((L + 1, S), ninf)
    alpha[0, 0] = 0.0
    for t in range(L):
        for s in range(S):
            a = alpha[t, s]
            if a == ninf:
                continue
            for x in range(X):
                ns = next_state[s, x]
                alpha[t + 1, ns] = _maxstar(alpha[t + 1, ns], a + gamma[t, s, x], max_log)
        norm = ninf
        for s in range(S):
            if alpha[t + 1, s] > norm:
                norm = alpha[t + 1, s]
        for s in range(S):
            alpha[t + 1, s] -= norm
    beta = np.zeros((L + 1, S))  # unterminated: uniform end state
    for t in range(L - 1, -1, -1):
        for s in range(S):
            acc = ninf
            for x in range(X):
                acc = _maxstar(acc, gamma[t, s, x] + beta[t + 1, next_state[s, x]], max_log)
            beta[t, s] = acc
        norm = ninf
        for s in range(S):
            if beta[t, s] > norm:
                norm = beta[t, s]
        for s in range(S):
            beta[t, s] -= norm
    app = np.full((L, X), ninf)
    for t in range(L):
        for s in range(S):
            a = alpha[t, s]
            if a == ninf:
                continue
            for x in range(X):
                v = a + gamma[t, s, x] + beta[t + 1, next_state[s, x]]
                app[t, x] = _maxstar(app[t, x], v, max_log)
    return app


def _bit_table(b: int) -> np.ndarray:
    x = np.arange(2**b)
    return ((x[:, None] >> np.arange(b - 1, -1, -1)) & 1).astype(float)


def _normalize(logp):
    """Shift log-probability rows so they log-sum to zero."""
    m = logp.max(axis=1, keepdims=True)
    return logp - (m + np.log(np.exp(logp - m).sum(axis=1, keepdims=True)))


def constituent_decode(code: RscCode, sys_llr, par_llr, apriori_logp=None, max_log: bool = False):
    """One log-MAP pass over an unterminated constituent trellis.

    Returns ``(app, extrinsic)`` as normalised log-probabilities over the
    2**b input words; extrinsic removes the a priori and the systematic
    channel terms from the APP.
    """
    sys_llr = np.asarray(sys_llr, dtype=float)
    L, b = sys_llr.shape
    if b != code.input_arity:
        raise ValueError(f"systematic LLRs have {b} columns, code expects {code.input_arity}")
    par_llr = np.ascontiguousarray(par_llr, dtype=float)
    if par_llr.shape != (L,):
        raise ValueError("parity LLR length does not match systematic LLRs")
    X = 2**b
    apriori = np.zeros((L, X)) if apriori_logp is None else np.ascontiguousarray(apriori_logp, dtype=float)
    sys_metric = np.ascontiguousarray(sys_llr @ _bit_table(b).T)
    tr = code.trellis
    app = _bcjr(tr.next_state, tr.parity, sys_metric, par_llr, apriori, max_log)
    ext = _normalize(app - apriori - sys_metric)
    return _normalize(app), ext


def turbo_decode(tc: TurboCode, channel_llrs, n_iters: int, max_log: bool = False,
                 trace: bool = False):
    """Iterative decoding from per-bit channel LLRs of shape (L, b+2).

    Returns ``(decoded_words, states)``; ``states`` holds one
    ExtrinsicState per half-iteration when ``trace`` is set.
    """
    if n_iters < 1:
        raise ValueError("n_iters must be at least 1")
    llr = np.asarray(channel_llrs, dtype=float)
    b, L = tc.k, tc.block_len
    if llr.shape != (L, b + 2):
        raise ValueError(f"channel LLRs must have shape {(L, b + 2)}, got {llr.shape}")
    if not np.all(np.isfinite(llr)):
        raise ValueError("channel LLRs must be finite")
    pi = tc.interleaver
    sys, p1, p2 = llr[:, :b], llr[:, b], llr[:, b + 1]
    sys_i, p2 = pi.apply(sys), np.ascontiguousarray(p2[pi.perm])
    apri1 = np.zeros((L, 2**b))
    states = []
    for it in range(1, n_iters + 1):
        _, ext1 = constituent_decode(tc.constituent, sys, p1, apri1, max_log)
        _, ext2 = constituent_decode(tc.constituent, sys_i, p2, pi.apply(ext1), max_log)
        apri1 = pi.invert(ext2)
        if trace:
            states.append(ExtrinsicState(it, 1, np.exp(ext1)))
            states.append(ExtrinsicState(it, 2, np.exp(apri1)))
    total = sys @ _bit_table(b).T + ext1 + apri1
    return total.argmax(axis=1), states


def _multinomial(n: int, parts) -> int:
    out, rest = 1, n
    for c in parts:
        out *= math.comb(rest, c)
        rest -= c
    return out


def uniform_interleaver_factor(block_len: int, composition) -> float:
    """1 / (number of sequences with this symbol composition).

    ``composition`` counts each non-zero input word; zeros fill the rest.
    For b = 1 this is 1 / C(L, w).
    """
    if sum(composition) > block_len:
        raise ValueError("composition exceeds block length")
    return 1.0 / _multinomial(block_len, composition)


def turbo_cwef(iowef1: WeightEnumerator, iowef2: WeightEnumerator, block_len: int,
               w_max: int, z_max: int) -> WeightEnumerator:
    """Average turbo enumerator over all symbol interleavers of length L.

    Conditioned on the input-symbol composition, the second constituent sees
    a uniformly random arrangement of the same symbols, so the two parity
    enumerators multiply with the 1/multinomial weight. Only the second
    constituent's parity is transmitted (U = 1).
    """
    for e in (iowef1, iowef2):
        if e.block_len != block_len:
            raise ValueError(f"constituent enumerator has L={e.block_len}, expected {block_len}")
        if e.by_composition is None:
            raise ValueError("constituent enumerators must track input composition")
    b = iowef1.input_arity
    weights = [bin(x).count("1") for x in range(1, 2**b)]
    counts: dict[tuple[int, int, int], float] = {}
    for comp, z1 in iowef1.by_composition.items():
        z2 = iowef2.by_composition.get(comp)
        if z2 is None:
            continue
        w = sum(c * wt for c, wt in zip(comp, weights))
        if w > w_max:
            continue
        z = np.convolve(z1, z2)[: z_max + 1] * uniform_interleaver_factor(block_len, comp)
        for zz in np.flatnonzero(z):
            key = (w, w, int(zz))
            counts[key] = counts.get(key, 0.0) + float(z[zz])
    return WeightEnumerator(counts, block_len, w_max, z_max, b)
