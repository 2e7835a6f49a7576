"""Seeded Monte Carlo BER engine for uncoded, SPC-coded and turbo-coded IM-FA.

Each SNR point is processed in chunks. Chunk ``c`` of point ``p`` draws
from ``SeedSequence([seed, p, c])``, and chunks are reduced in index order
with the stopping rule checked after each one, so a curve depends only on
the configuration and never on the number of workers.

A *trial* is one symbol interval for the uncoded scheme and one block of
``block_len`` intervals for the coded schemes.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from .channel import CorrelationMatrix, build_correlation, sample_channels, sample_noise, snr_db_to_noise_var
from .conv import RscCode, build_rsc, encode_words, parse_octal, viterbi_decode_words
from .im import (ImConfig, QamConstellation, build_constellation, compute_llrs_batch, indices_to_words,
                 ml_detect_indices, words_to_indices)
from .turbo import Interleaver, TurboCode, turbo_decode, turbo_encode

SCHEMES = ("uncoded", "spc", "turbo")
UNCODED_CHUNK = 20_000


@dataclass(frozen=True)
class ExperimentConfig:
    scheme: str
    n_ports: int
    mod_order: int
    fa_size: float
    snr_grid_db: tuple[float, ...]
    max_trials: int = 10**6
    min_errors: int = 100
    seed: int = 0
    generators: tuple[str, ...] | None = None  # octal
    block_len: int = 1024
    n_iters: int = 15
    interleaver_seed: int | None = None
    max_log: bool = False
    track_iterations: bool = False

    def __post_init__(self):
        object.__setattr__(self, "snr_grid_db", tuple(float(s) for s in self.snr_grid_db))
        if self.generators is not None:
            gens = tuple(format(g, "o") for g in parse_octal(self.generators))
            object.__setattr__(self, "generators", gens)
        self.validate()

    def validate(self):
        def bad(name, why):
            raise ValueError(f"{name}: {why}")

        if self.scheme not in SCHEMES:
            bad("scheme", f"must be one of {SCHEMES}, got {self.scheme!r}")
        for name in ("n_ports", "mod_order"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1 or v & (v - 1):
                bad(name, f"must be a positive power of two, got {v!r}")
        if self.mod_order < 2:
            bad("mod_order", "must be at least 2")
        if self.n_ports < 2:
            bad("n_ports", "must be at least 2")
        if not self.fa_size > 0:
            bad("fa_size", f"must be positive, got {self.fa_size}")
        if not self.snr_grid_db:
            bad("snr_grid_db", "must not be empty")
        if list(self.snr_grid_db) != sorted(self.snr_grid_db):
            bad("snr_grid_db", "must be sorted ascending")
        if self.max_trials < 1:
            bad("max_trials", "must be positive")
        if self.min_errors < 1:
            bad("min_errors", "must be positive")
        if self.scheme == "uncoded":
            return
        if self.generators is None:
            bad("generators", f"required for scheme {self.scheme!r}")
        if self.block_len < 1:
            bad("block_len", "must be positive")
        b = len(self.generators) - 1
        im = ImConfig(self.n_ports, self.mod_order)
        if self.scheme == "spc":
            if im.n_bits_port < 2:
                bad("n_ports", "SPC needs at least 4 ports")
            if b != im.n_bits_port - 1:
                bad("generators", f"SPC on {self.n_ports} ports needs a rate "
                                  f"{im.n_bits_port - 1}/{im.n_bits_port} code, got rate {b}/{b + 1}")
            if self.block_len <= build_rsc(self.generators).tail_len:
                bad("block_len", "must exceed the termination tail")
        else:
            if im.k < 3:
                bad("n_ports", "turbo needs log2(N*M) >= 3")
            if b != im.k - 2:
                bad("generators", f"turbo with log2(NM)={im.k} needs a rate {im.k - 2}/{im.k - 1} "
                                  f"constituent, got rate {b}/{b + 1}")
            if self.n_iters < 1:
                bad("n_iters", "must be at least 1")

    @property
    def im(self) -> ImConfig:
        return ImConfig(self.n_ports, self.mod_order)

    @property
    def info_bits_per_trial(self) -> int:
        """Nominal spectral efficiency times the trial length."""
        k = self.im.k
        if self.scheme == "uncoded":
            return k
        if self.scheme == "spc":
            return (k - 1) * self.block_len
        return (k - 2) * self.block_len

    def to_dict(self) -> dict:
        d = asdict(self)
        d["snr_grid_db"] = list(self.snr_grid_db)
        if self.generators is not None:
            d["generators"] = list(self.generators)
        return d


@dataclass(frozen=True)
class BerPoint:
    snr_db: float
    bit_errors: int
    bits_sent: int
    trials: int
    iter_errors: tuple[int, ...] | None = None

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits_sent if self.bits_sent else 0.0

    @property
    def mc_std_error(self) -> float:
        p = self.ber
        return math.sqrt(p * (1 - p) / self.bits_sent) if self.bits_sent else 0.0


@dataclass
class BerCurve:
    config: dict
    points: list[BerPoint] = field(default_factory=list)
    wall_time_s: float = 0.0

    def snr(self) -> np.ndarray:
        return np.array([p.snr_db for p in self.points])

    def ber(self) -> np.ndarray:
        return np.array([p.ber for p in self.points])

    def snr_at_ber(self, target: float) -> float:
        """Log-linear interpolation of the SNR where BER crosses ``target``.

        Returns NaN if the curve never crosses it.
        """
        snr, ber = self.snr(), self.ber()
        for i in range(len(ber) - 1):
            if ber[i] >= target > ber[i + 1]:
                lo = math.log10(ber[i])
                hi = math.log10(ber[i + 1]) if ber[i + 1] > 0 else lo - 3.0
                frac = (lo - math.log10(target)) / (lo - hi)
                return float(snr[i] + frac * (snr[i + 1] - snr[i]))
        return float("nan")


@dataclass(frozen=True)
class _Setup:
    im: ImConfig
    const: QamConstellation
    corr: CorrelationMatrix
    code: RscCode | None
    turbo: TurboCode | None


@lru_cache(maxsize=16)
def _setup(cfg: ExperimentConfig) -> _Setup:
    im = cfg.im
    code = build_rsc(cfg.generators) if cfg.generators else None
    turbo = None
    if cfg.scheme == "turbo":
        seed = cfg.seed if cfg.interleaver_seed is None else cfg.interleaver_seed
        turbo = TurboCode(code, Interleaver.random(cfg.block_len, seed))
    return _Setup(im, build_constellation(cfg.mod_order), build_correlation(cfg.n_ports, cfg.fa_size),
                  code, turbo)


def transmit(words, im: ImConfig, const: QamConstellation, corr: CorrelationMatrix, noise_var, rng):
    """Send k-bit words over independent correlated fades; returns (y, h)."""
    ports, points = words_to_indices(words, im, const)
    n = len(ports)
    h = sample_channels(corr, n, rng)
    y = h[np.arange(n), ports] * const.points[points] + sample_noise(noise_var, rng, n)
    return y, h


def _popcount(x):
    x = np.asarray(x, dtype=np.int64)
    out = np.zeros_like(x)
    while np.any(x):
        out += x & 1
        x = x >> 1
    return out


def _chunk_uncoded(cfg, st: _Setup, noise_var, rng, n):
    words = rng.integers(0, st.im.n_hypotheses, n)
    y, h = transmit(words, st.im, st.const, st.corr, noise_var, rng)
    ports, points = ml_detect_indices(y, h, st.const)
    est = indices_to_words(ports, points, st.im, st.const)
    return int(_popcount(words ^ est).sum()), st.im.k * n, None


def _chunk_spc(cfg, st: _Setup, noise_var, rng, n_blocks):
    im, code = st.im, st.code
    b, B, tail = code.input_arity, cfg.block_len, code.tail_len
    errors = sent = 0
    for _ in range(n_blocks):
        info = rng.integers(0, 2**b, B - tail)
        sym = rng.integers(0, im.mod_order, B)
        coded, _ = encode_words(code, info, terminate=True)
        words = (coded << im.n_bits_sym) | sym
        y, h = transmit(words, im, st.const, st.corr, noise_var, rng)
        ports, points = ml_detect_indices(y, h, st.const)
        est = indices_to_words(ports, points, im, st.const)
        info_hat = viterbi_decode_words(code, est >> im.n_bits_sym, terminated=True)
        errors += int(_popcount(info ^ info_hat).sum() + _popcount(sym ^ (est & (im.mod_order - 1))).sum())
        sent += b * (B - tail) + im.n_bits_sym * B
    return errors, sent, None


def _chunk_turbo(cfg, st: _Setup, noise_var, rng, n_blocks):
    im, tc = st.im, st.turbo
    b = tc.k
    errors = sent = 0
    iter_err = np.zeros(cfg.n_iters, dtype=np.int64) if cfg.track_iterations else None
    bits = ((np.arange(2**b)[:, None] >> np.arange(b - 1, -1, -1)) & 1).astype(float)
    for _ in range(n_blocks):
        u = rng.integers(0, 2**b, tc.block_len)
        y, h = transmit(turbo_encode(tc, u), im, st.const, st.corr, noise_var, rng)
        llr = compute_llrs_batch(y, h, im, st.const, noise_var)
        u_hat, trace = turbo_decode(tc, llr, cfg.n_iters, cfg.max_log, trace=cfg.track_iterations)
        errors += int(_popcount(u ^ u_hat).sum())
        sent += b * tc.block_len
        if iter_err is not None:
            sys_metric = llr[:, :b] @ bits.T
            with np.errstate(divide="ignore"):
                for i in range(cfg.n_iters):
                    total = sys_metric + np.log(trace[2 * i].probs) + np.log(trace[2 * i + 1].probs)
                    iter_err[i] += int(_popcount(u ^ total.argmax(axis=1)).sum())
    return errors, sent, iter_err


_CHUNKS = {"uncoded": _chunk_uncoded, "spc": _chunk_spc, "turbo": _chunk_turbo}


def _run_chunk(cfg: ExperimentConfig, point: int, chunk: int, n: int):
    st = _setup(cfg)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, point, chunk]))
    noise_var = float(snr_db_to_noise_var(cfg.snr_grid_db[point]))
    return _CHUNKS[cfg.scheme](cfg, st, noise_var, rng, n)


def _chunk_size(cfg: ExperimentConfig) -> int:
    return UNCODED_CHUNK if cfg.scheme == "uncoded" else 1


def _run_point(cfg: ExperimentConfig, point: int, pool, width: int) -> BerPoint:
    size = _chunk_size(cfg)
    errors = sent = trials = 0
    iter_err = None
    chunk = 0
    while trials < cfg.max_trials and errors < cfg.min_errors:
        jobs = []
        planned = trials
        for c in range(chunk, chunk + width):
            n = min(size, cfg.max_trials - planned)
            if n <= 0:
                break
            jobs.append((c, n))
            planned += n
        if pool is None:
            results = [_run_chunk(cfg, point, c, n) for c, n in jobs]
        else:
            results = list(pool.map(_run_chunk, *zip(*[(cfg, point, c, n) for c, n in jobs])))
        for (c, n), (e, s, it) in zip(jobs, results):
            errors += e
            sent += s
            trials += n
            chunk = c + 1
            if it is not None:
                iter_err = it if iter_err is None else iter_err + it
            if errors >= cfg.min_errors:
                break
    its = tuple(int(v) for v in iter_err) if iter_err is not None else None
    return BerPoint(cfg.snr_grid_db[point], errors, sent, trials, its)


def run_experiment(cfg: ExperimentConfig, workers: int = 1, progress=None) -> BerCurve:
    """Simulate every SNR point of ``cfg``; identical output for any ``workers``."""
    if workers < 1:
        raise ValueError("workers must be at least 1")
    start = time.perf_counter()
    curve = BerCurve(cfg.to_dict())
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    try:
        for p in range(len(cfg.snr_grid_db)):
            point = _run_point(cfg, p, pool, workers)
            curve.points.append(point)
            if progress is not None:
                progress(point)
    finally:
        if pool is not None:
            pool.shutdown()
    curve.wall_time_s = time.perf_counter() - start
    return curve


def _expect(cfg: ExperimentConfig, scheme: str):
    if cfg.scheme != scheme:
        raise ValueError(f"scheme: expected {scheme!r}, got {cfg.scheme!r}")


def run_uncoded(cfg: ExperimentConfig, workers: int = 1) -> BerCurve:
    _expect(cfg, "uncoded")
    return run_experiment(cfg, workers)


def run_spc(cfg: ExperimentConfig, workers: int = 1) -> BerCurve:
    _expect(cfg, "spc")
    return run_experiment(cfg, workers)


def run_turbo(cfg: ExperimentConfig, workers: int = 1) -> BerCurve:
    _expect(cfg, "turbo")
    return run_experiment(cfg, workers)
