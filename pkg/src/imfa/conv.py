"""Recursive systematic convolutional (RSC) codes of rate b/(b+1).

Generators are given in octal as ``[g_1, ..., g_b, g_r]``: b feedforward
polynomials and the feedback polynomial last. The least significant octal
bit is the coefficient of D^0. The encoder is realised in observer
(parity-check) canonical form with a single register of ``nu`` cells,

    g_r(D) P(D) = sum_i g_i(D) X_i(D),

so a code with degree-``nu`` polynomials has exactly 2**nu states
regardless of b. Output words are the b systematic bits followed by the
parity bit.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from numba import njit


def parse_octal(generators) -> list[int]:
    """Accept "13,15,17,11", ["13", "15"], or [13, 15] (digits read as octal)."""
    if isinstance(generators, str):
        generators = [g for g in generators.replace(" ", "").split(",") if g]
    out = []
    for g in generators:
        text = str(g)
        if not text or any(c not in "01234567" for c in text):
            raise ValueError(f"malformed octal generator {g!r}")
        out.append(int(text, 8))
    return out


@dataclass(frozen=True)
class Trellis:
    """Branch tables indexed by (state, input word)."""

    next_state: np.ndarray
    parity: np.ndarray
    output: np.ndarray  # (b+1)-bit word: systematic bits then parity (LSB)

    @property
    def n_states(self) -> int:
        return self.next_state.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.next_state.shape[1]


@dataclass(frozen=True)
class RscCode:
    generators: tuple[int, ...]
    input_arity: int
    memory: int
    trellis: Trellis = field(repr=False)
    term_input: np.ndarray = field(repr=False)
    tail_len: int = 0

    @property
    def n_states(self) -> int:
        return 2**self.memory

    @property
    def rate(self) -> tuple[int, int]:
        return self.input_arity, self.input_arity + 1

    def octal(self) -> str:
        return ",".join(format(g, "o") for g in self.generators)


def _coeffs(poly: int, nu: int) -> list[int]:
    return [(poly >> j) & 1 for j in range(nu + 1)]


def build_rsc(generators) -> RscCode:
    gens = parse_octal(generators)
    if len(gens) < 2:
        raise ValueError("need at least one feedforward and one feedback generator")
    feedback = gens[-1]
    if feedback == 0:
        raise ValueError("feedback generator must be non-zero")
    if not feedback & 1:
        raise ValueError("feedback generator needs a D^0 term")
    nu = max(g.bit_length() for g in gens) - 1
    if nu < 1:
        raise ValueError("feedback generator must have degree >= 1")
    b = len(gens) - 1
    ff = [_coeffs(g, nu) for g in gens[:-1]]
    fb = _coeffs(feedback, nu)
    S, X = 2**nu, 2**b

    next_state = np.zeros((S, X), dtype=np.int64)
    parity = np.zeros((S, X), dtype=np.int64)
    for s in range(S):
        cells = [(s >> j) & 1 for j in range(nu)]  # cells[j] holds s_{j+1}
        for x in range(X):
            xb = [(x >> (b - 1 - i)) & 1 for i in range(b)]
            p = (cells[0] + sum(ff[i][0] * xb[i] for i in range(b))) & 1
            ns = 0
            for j in range(1, nu + 1):
                carry = cells[j] if j < nu else 0
                bit = carry + fb[j] * p + sum(ff[i][j] * xb[i] for i in range(b))
                ns |= (bit & 1) << (j - 1)
            next_state[s, x] = ns
            parity[s, x] = p
    output = (np.arange(X)[None, :] << 1) | parity
    trellis = Trellis(next_state, parity, output)
    for arr in (next_state, parity, output):
        arr.setflags(write=False)

    term_input, tail_len = _termination_table(next_state)
    return RscCode(tuple(gens), b, nu, trellis, term_input, tail_len)


def _termination_table(next_state):
    """Shortest input path from every state back to 0 (smallest input on ties)."""
    S, X = next_state.shape
    dist = np.full(S, -1)
    dist[0] = 0
    preds: list[list[tuple[int, int]]] = [[] for _ in range(S)]
    for s in range(S):
        for x in range(X):
            preds[next_state[s, x]].append((s, x))
    queue = deque([0])
    while queue:
        t = queue.popleft()
        for s, _ in preds[t]:
            if dist[s] < 0:
                dist[s] = dist[t] + 1
                queue.append(s)
    if np.any(dist < 0):
        raise ValueError("trellis cannot be driven back to the zero state")
    term = np.zeros(S, dtype=np.int64)
    for s in range(1, S):
        term[s] = next(x for x in range(X) if dist[next_state[s, x]] == dist[s] - 1)
    term.setflags(write=False)
    return term, int(dist.max())


def _as_words(bits, width: int) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64).reshape(-1, width)
    weights = 1 << np.arange(width - 1, -1, -1)
    return bits @ weights


def _to_bits(words, width: int) -> np.ndarray:
    words = np.asarray(words, dtype=np.int64)
    shifts = np.arange(width - 1, -1, -1)
    return ((words[..., None] >> shifts) & 1).reshape(words.shape[:-1] + (-1,))


@njit(cache=True)
def _encode_words(next_state, output, words, start_state):
    n = words.shape[0]
    out = np.empty(n, dtype=np.int64)
    s = start_state
    for t in range(n):
        x = words[t]
        out[t] = output[s, x]
        s = next_state[s, x]
    return out, s


def encode_words(code: RscCode, words, terminate: bool = False):
    """Encode integer input words; returns (output words, tail input words)."""
    tr = code.trellis
    words = np.ascontiguousarray(words, dtype=np.int64)
    out, end_state = _encode_words(tr.next_state, tr.output, words, 0)
    if not terminate:
        return out, np.zeros(0, dtype=np.int64)
    tail = np.zeros(code.tail_len, dtype=np.int64)
    state = end_state
    for t in range(code.tail_len):
        tail[t] = code.term_input[state]
        state = tr.next_state[state, tail[t]]
    tail_out, _ = _encode_words(tr.next_state, tr.output, tail, end_state)
    return np.concatenate([out, tail_out]), tail


def rsc_encode(code: RscCode, info_bits, terminate: bool = False) -> np.ndarray:
    """Encode a flat bit array; output is (b+1) bits per step, systematic first."""
    b = code.input_arity
    info_bits = np.asarray(info_bits, dtype=np.int64)
    if info_bits.size % b:
        raise ValueError(f"info length {info_bits.size} not divisible by {b}")
    out, _ = encode_words(code, _as_words(info_bits, b), terminate)
    return _to_bits(out[:, None], b + 1).ravel()


@njit(cache=True)
def _viterbi(rx, output, pred_s, pred_x, n_states, terminated, term_input, tail_len):
    T = rx.shape[0]
    P = pred_s.shape[1]
    big = 1 << 40
    metric = np.full(n_states, big, dtype=np.int64)
    metric[0] = 0
    back_s = np.empty((T, n_states), dtype=np.int64)
    back_x = np.empty((T, n_states), dtype=np.int64)
    new = np.empty(n_states, dtype=np.int64)
    for t in range(T):
        r = rx[t]
        for ns in range(n_states):
            best = big * 2
            bs = -1
            bx = -1
            for j in range(P):
                s = pred_s[ns, j]
                if s < 0:
                    continue
                x = pred_x[ns, j]
                if terminated and t >= T - tail_len and x != term_input[s]:
                    continue  # tail steps follow the encoder's forced inputs
                diff = output[s, x] ^ r
                d = 0
                while diff:
                    d += diff & 1
                    diff >>= 1
                m = metric[s] + d
                if m < best:
                    best = m
                    bs = s
                    bx = x
            new[ns] = best
            back_s[t, ns] = bs
            back_x[t, ns] = bx
        metric[:] = new
    s = 0
    if not terminated:
        s = int(np.argmin(metric))
    decided = np.empty(T, dtype=np.int64)
    for t in range(T - 1, -1, -1):
        decided[t] = back_x[t, s]
        s = back_s[t, s]
    return decided


def _predecessors(trellis: Trellis):
    S, X = trellis.next_state.shape
    lists: list[list[tuple[int, int]]] = [[] for _ in range(S)]
    for s in range(S):
        for x in range(X):
            lists[trellis.next_state[s, x]].append((s, x))
    P = max(len(v) for v in lists)
    pred_s = np.full((S, P), -1, dtype=np.int64)
    pred_x = np.full((S, P), -1, dtype=np.int64)
    for ns, v in enumerate(lists):
        for j, (s, x) in enumerate(sorted(v)):
            pred_s[ns, j] = s
            pred_x[ns, j] = x
    return pred_s, pred_x


_PRED_CACHE: dict = {}


def viterbi_decode_words(code: RscCode, rx_words, terminated: bool = True) -> np.ndarray:
    key = code.generators
    if key not in _PRED_CACHE:
        _PRED_CACHE[key] = _predecessors(code.trellis)
    pred_s, pred_x = _PRED_CACHE[key]
    rx_words = np.ascontiguousarray(rx_words, dtype=np.int64)
    if terminated and len(rx_words) < code.tail_len:
        raise ValueError(f"terminated block shorter than the {code.tail_len}-step tail")
    decided = _viterbi(rx_words, code.trellis.output, pred_s, pred_x, code.n_states, terminated,
                       code.term_input, code.tail_len)
    return decided[: len(decided) - code.tail_len] if terminated else decided


def viterbi_decode_hard(code: RscCode, received_bits, terminated: bool = True) -> np.ndarray:
    """Minimum-Hamming-distance path; ties go to the lower predecessor state.

    With ``terminated`` the path must end in state 0 and the trailing
    ``tail_len`` steps are dropped from the returned information bits.
    """
    width = code.input_arity + 1
    received_bits = np.asarray(received_bits, dtype=np.int64)
    if received_bits.size % width:
        raise ValueError(f"received length {received_bits.size} not divisible by {width}")
    words = viterbi_decode_words(code, _as_words(received_bits, width), terminated)
    return _to_bits(words[:, None], code.input_arity).ravel()


def compute_wef(code: RscCode, d_max: int) -> tuple[int, dict[int, int]]:
    """Path-count weight enumerator T(Z) = sum_d a_d Z^d up to ``d_max``.

    a_d counts error events (paths that leave the zero state and re-merge
    with it for the first time) of total output Hamming weight d.
    """
    if d_max > 40:
        raise ValueError("d_max above 40 is not supported")
    tr = code.trellis
    S, X = tr.n_states, tr.n_inputs
    weight = [[bin(int(w)).count("1") for w in row] for row in tr.output]
    a = [0] * (d_max + 1)
    cur = [[0] * (d_max + 1) for _ in range(S)]
    for x in range(1, X):
        ns, d = tr.next_state[0, x], weight[0][x]
        if d <= d_max:
            if ns == 0:
                a[d] += 1
            else:
                cur[ns][d] += 1
    for _ in range(64 * (d_max + 1)):
        if not any(any(row) for row in cur):
            break
        new = [[0] * (d_max + 1) for _ in range(S)]
        for s in range(1, S):
            row = cur[s]
            if not any(row):
                continue
            for x in range(X):
                ns, dw = tr.next_state[s, x], weight[s][x]
                dst = a if ns == 0 else new[ns]
                for d in range(d_max + 1 - dw):
                    if row[d]:
                        dst[d + dw] += row[d]
        cur = new
    else:
        raise ValueError("state diagram has a zero-weight cycle; WEF diverges")
    coeffs = {d: c for d, c in enumerate(a) if c}
    if not coeffs:
        raise ValueError(f"no error event of weight <= {d_max}")
    return min(coeffs), coeffs


@dataclass
class WeightEnumerator:
    """Sparse (w, u, z) -> count table for length-``block_len`` codewords.

    ``by_composition`` optionally keeps the finer split by input-symbol
    composition (count of each non-zero b-bit input word), mapping a
    composition tuple to a z-indexed count array; the systematic weight
    equals the input weight w for these codes.
    """

    counts: dict[tuple[int, int, int], float]
    block_len: int
    w_max: int
    z_max: int
    input_arity: int = 1
    by_composition: dict[tuple[int, ...], np.ndarray] | None = None

    def total(self) -> float:
        return sum(self.counts.values())

    def cwef(self, w: int) -> dict[tuple[int, int], float]:
        return {(u, z): c for (ww, u, z), c in self.counts.items() if ww == w}


def _compositions(n_types: int, weights: list[int], w_max: int) -> list[tuple[int, ...]]:
    out = []

    def rec(i, prefix, budget):
        if i == n_types:
            out.append(tuple(prefix))
            return
        for c in range(budget // weights[i] + 1):
            rec(i + 1, prefix + [c], budget - c * weights[i])

    rec(0, [], w_max)
    return out


def compute_iowef(code: RscCode, block_len: int, w_max: int, z_max: int,
                  terminate: bool = True, track_composition: bool | None = None) -> WeightEnumerator:
    """Input-output weight enumerator of the length-``block_len`` block code.

    Dynamic programming over (step, state, input composition, parity
    weight). With ``terminate`` the encoder appends ``tail_len`` forced
    steps after the information; every bit those steps emit counts toward
    the parity weight z, so u = w holds for all terms. Composition
    tracking (needed for the symbol-interleaver combination) defaults on
    for b <= 2.
    """
    b = code.input_arity
    if w_max < 0 or z_max < 0:
        raise ValueError("truncation limits must be non-negative")
    if w_max > b * block_len:
        w_max = b * block_len
    if track_composition is None:
        track_composition = b <= 2
    tr = code.trellis
    S, X = tr.n_states, tr.n_inputs
    input_weight = [bin(x).count("1") for x in range(X)]

    if track_composition:
        comps = _compositions(X - 1, input_weight[1:], w_max)
    else:
        comps = [(w,) for w in range(w_max + 1)]
    index = {c: i for i, c in enumerate(comps)}
    n_comp = len(comps)
    step = np.full((n_comp, X), -1, dtype=np.int64)
    for i, c in enumerate(comps):
        for x in range(X):
            if x == 0:
                step[i, x] = i
                continue
            if track_composition:
                nc = list(c)
                nc[x - 1] += 1
                nxt = tuple(nc)
            else:
                nxt = (c[0] + input_weight[x],)
            step[i, x] = index.get(nxt, -1)

    C = np.zeros((S, n_comp, z_max + 1))
    C[0, 0, 0] = 1.0
    for _ in range(block_len):
        new = np.zeros_like(C)
        for s in range(S):
            if not C[s].any():
                continue
            for x in range(X):
                ns, p = tr.next_state[s, x], tr.parity[s, x]
                valid = step[:, x] >= 0
                src = C[s, valid, : z_max + 1 - p]
                new[ns, step[valid, x], p:] += src
        C = new
    if terminate:
        for _ in range(code.tail_len):
            new = np.zeros_like(C)
            for s in range(S):
                x = code.term_input[s]
                dz = input_weight[x] + tr.parity[s, x]
                if dz <= z_max:
                    new[tr.next_state[s, x], :, dz:] += C[s, :, : z_max + 1 - dz]
            C = new
        final = C[0]
    else:
        final = C.sum(axis=0)

    def clean(v):
        return int(v) if float(v).is_integer() and v < 2**53 else float(v)

    counts: dict[tuple[int, int, int], float] = {}
    by_comp = {} if track_composition else None
    for i, c in enumerate(comps):
        w = sum(n * wt for n, wt in zip(c, input_weight[1:])) if track_composition else c[0]
        row = final[i]
        if track_composition and row.any():
            by_comp[c] = row.copy()
        for z in np.flatnonzero(row):
            key = (w, w, int(z))
            counts[key] = clean(counts.get(key, 0) + row[z])
    return WeightEnumerator(counts, block_len, w_max, z_max, b, by_comp)


def spc_port_map(coded_port_bits) -> int:
    """Natural-binary port number (1-based) of an SPC-coded port word, MSB first."""
    bits = list(coded_port_bits)
    if not bits or any(b not in (0, 1) for b in bits):
        raise ValueError("port word must be a non-empty list of bits")
    value = 0
    for b in bits:
        value = (value << 1) | b
    return value + 1


def spc_port_unmap(port: int, n_bits: int) -> list[int]:
    if not 1 <= port <= 2**n_bits:
        raise ValueError(f"port {port} out of range for {n_bits} bits")
    return [((port - 1) >> (n_bits - 1 - i)) & 1 for i in range(n_bits)]
