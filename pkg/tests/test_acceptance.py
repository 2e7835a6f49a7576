"""End-to-end acceptance checks; each test records one PASS/FAIL line.

The terminal summary (see conftest.py) prints every line after the run.
SNR-convention offset for the capacity and EXIT checks: +1 dB, applied
uniformly (our SNR = reference SNR + 1 dB).
"""

import itertools
import math
import time

import numpy as np
import pytest

from imfa.analysis import capacity_mc, exit_trajectory, pep_closed_form, turbo_ber_bound, uncoded_union_bound
from imfa.channel import build_correlation, sample_channels, sample_noise, snr_db_to_noise_var
from imfa.cli import main
from imfa.conv import build_rsc, compute_iowef, compute_wef, encode_words, rsc_encode, viterbi_decode_hard
from imfa.im import ImConfig, build_constellation, im_demap, im_map, int_to_bits
from imfa.numerics import rank_one_eigenvalue
from imfa.simulation import ExperimentConfig, run_experiment
from imfa.turbo import Interleaver, TurboCode, turbo_cwef

pytestmark = pytest.mark.acceptance

SNR_OFFSET_DB = 1.0
TARGET_BER = 1e-3


def grid(start, stop, step=1.0):
    return tuple(float(s) for s in np.arange(start, stop + step / 2, step))


def crossing(cfg):
    curve = run_experiment(cfg)
    return curve, curve.snr_at_ber(TARGET_BER)


# 1 ---------------------------------------------------------------------------

def test_c1_weight_enumerator_exactness(verdict):
    t0 = time.perf_counter()
    d_free, wef = compute_wef(build_rsc("13,15,17,11"), 8)
    elapsed = time.perf_counter() - t0
    got = [wef.get(d, 0) for d in range(4, 9)]
    want = [5, 36, 152, 720, 3472]
    ok = got == want and d_free == 4 and elapsed < 1.0
    verdict("1 WEF exactness", ok, f"a4..a8={got} (published {want}), d_free={d_free}, {elapsed:.2f}s")


# 2 ---------------------------------------------------------------------------

def pairwise_mc(delta, corr, noise_var, n_draws, rng, chunk=10**6):
    """Fraction of draws where y = h x + w lies closer to h x' (delta = x - x')."""
    hits = 0
    for start in range(0, n_draws, chunk):
        n = min(chunk, n_draws - start)
        g = sample_channels(corr, n, rng) @ delta
        w = sample_noise(noise_var, rng, n)
        hits += int(np.count_nonzero(np.abs(g + w) < np.abs(w)))
    return hits / n_draws


def test_c2_pep_closed_form_vs_monte_carlo(verdict):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(10):
        n = int(rng.choice([2, 4, 8]))
        corr = build_correlation(n, float(rng.uniform(0.1, 2.0)))
        delta = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        mu = float(np.real(delta.conj() @ corr.entries @ delta))
        nv = mu * float(10 ** rng.uniform(-2, 0))
        n_draws = 10**7
        p_mc = pairwise_mc(delta, corr, nv, n_draws, rng)
        se = math.sqrt(p_mc * (1 - p_mc) / n_draws)
        z = abs(p_mc - pep_closed_form(mu, nv)) / se
        worst = max(worst, z)
    elapsed = time.perf_counter() - t0
    ok = worst <= 3.0 and elapsed < 120
    verdict("2 PEP oracle", ok, f"max |closed - MC| = {worst:.2f} SE over 10 instances (limit 3), {elapsed:.0f}s")


# 3 ---------------------------------------------------------------------------

def test_c3_union_bound_dominance_and_tightness(verdict):
    t0 = time.perf_counter()
    cfg = ExperimentConfig("uncoded", 4, 4, 0.5, grid(15, 30), max_trials=4 * 10**6, min_errors=10**12, seed=3)
    curve = run_experiment(cfg)
    bound = uncoded_union_bound(ImConfig(4, 4), build_correlation(4, 0.5), snr_db_to_noise_var(curve.snr()))
    sim = curve.ber()
    errors = np.array([p.bit_errors for p in curve.points])
    dominated = bool(np.all(sim <= bound))
    counted = errors >= 100
    ratio = float(np.max(bound[counted] / sim[counted]))
    elapsed = time.perf_counter() - t0
    ok = dominated and ratio <= 10 and elapsed < 600
    tightest = float(np.min(bound / sim))
    verdict("3 union bound", ok, f"sim <= bound at all 16 points: {dominated} (min bound/sim {tightest:.3f}), "
                                 f"max bound/sim {ratio:.2f} (limit 10), {elapsed:.0f}s")


# 4 ---------------------------------------------------------------------------

def test_c4_fluid_vs_conventional_antenna(verdict):
    t0 = time.perf_counter()
    snr = grid(34, 56)
    fa = ExperimentConfig("uncoded", 32, 2, 1.0, snr, max_trials=10**7, min_errors=100, seed=4)
    ca = ExperimentConfig("uncoded", 2, 32, 0.5, snr, max_trials=10**7, min_errors=100, seed=4)
    _, s_fa = crossing(fa)
    _, s_ca = crossing(ca)
    gain = s_ca - s_fa
    elapsed = time.perf_counter() - t0
    ok = abs(gain - 4.0) <= 1.5 and elapsed < 1800
    verdict("4 FA vs CA", ok, f"10^-3 at {s_fa:.1f} dB (N=32,M=2,W=1) vs {s_ca:.1f} dB (N=2,M=32,W=0.5): "
                              f"FA gain {gain:+.1f} dB (need 4 +- 1.5), {elapsed:.0f}s")


# 5 ---------------------------------------------------------------------------

def test_c5_set_partition_coding_gain(verdict):
    t0 = time.perf_counter()
    snr = grid(34, 54)
    gens = ("13", "15", "17", "11")
    out = {}
    for w in (0.4, 5.0):
        spc = ExperimentConfig("spc", 16, 4, w, snr, max_trials=5000, min_errors=100, seed=5,
                               generators=gens, block_len=256)
        unc = ExperimentConfig("uncoded", 16, 2, w, snr, max_trials=10**7, min_errors=100, seed=5)
        out[w] = (crossing(spc)[1], crossing(unc)[1])
    gain = out[0.4][1] - out[0.4][0]
    inverted = out[5.0][0] > out[5.0][1]
    elapsed = time.perf_counter() - t0
    ok = gain >= 2.5 and inverted and elapsed < 1800
    verdict("5 SPC gain", ok, f"W=0.4: SPC {out[0.4][0]:.1f} dB vs uncoded {out[0.4][1]:.1f} dB, gain {gain:.1f} dB "
                              f"(need >= 2.5); W=5: SPC {out[5.0][0]:.1f} dB vs uncoded {out[5.0][1]:.1f} dB, "
                              f"inversion {inverted}; {elapsed:.0f}s")


# 6 ---------------------------------------------------------------------------

def capacity_at(n, m, snr_db, seed):
    rng = np.random.default_rng(np.random.SeedSequence([seed, int(round(snr_db * 10))]))
    return capacity_mc(ImConfig(n, m), build_correlation(n, 1.0), float(snr_db_to_noise_var(snr_db)), 10**4, rng)


def test_c6_capacity_saturation(verdict):
    t0 = time.perf_counter()
    c44 = capacity_at(4, 4, 28.0 + SNR_OFFSET_DB, 6)
    c84 = capacity_at(8, 4, 17.5 + 3.0 + SNR_OFFSET_DB, 6)
    within = True
    for n, m in ((4, 4), (8, 4)):
        for s in np.arange(0.0, 41.0, 5.0):
            est = capacity_at(n, m, float(s), 7)
            within &= est.value <= math.log2(n * m) + 3 * est.std_error
    elapsed = time.perf_counter() - t0
    ok = c44.value >= 3.9 and c84.value >= 4.9 and within and elapsed < 600
    verdict("6 capacity", ok, f"N=4,M=4 @ {28 + SNR_OFFSET_DB:.1f} dB: {c44.value:.3f} (need 3.9); "
                              f"N=8,M=4 @ {20.5 + SNR_OFFSET_DB:.1f} dB: {c84.value:.3f} (need 4.9); "
                              f"C <= log2(NM) on 0-40 dB: {within}; {elapsed:.0f}s")


# 7 and 8 ---------------------------------------------------------------------

TURBO = dict(scheme="turbo", n_ports=8, mod_order=2, generators=("2", "4", "11"), block_len=4096, n_iters=15,
             min_errors=100, max_trials=150, seed=7)


@pytest.fixture(scope="module")
def turbo_runs():
    t0 = time.perf_counter()
    w30 = run_experiment(ExperimentConfig(fa_size=0.30, snr_grid_db=grid(14, 26), **TURBO))
    w12 = run_experiment(ExperimentConfig(fa_size=0.12, snr_grid_db=(22.0, 24.0, 26.0), **TURBO))
    unc = run_experiment(ExperimentConfig("uncoded", 2, 2, 0.30, grid(20, 40), max_trials=10**7,
                                          min_errors=100, seed=7))
    return w30, w12, unc, time.perf_counter() - t0


def test_c7_turbo_waterfall(turbo_runs, verdict):
    w30, w12, unc, elapsed = turbo_runs
    s_turbo, s_unc = w30.snr_at_ber(TARGET_BER), unc.snr_at_ber(TARGET_BER)
    gain = s_unc - s_turbo
    ber30 = dict(zip(w30.snr(), w30.ber()))
    floor = [(s, ber30[s], b) for s, b in zip(w12.snr(), w12.ber())]
    below = all(a < b for _, a, b in floor)
    ok = gain >= 6.0 and below and elapsed < 3600
    pairs = ", ".join(f"{s:.0f} dB {a:.1e}<{b:.1e}" for s, a, b in floor)
    verdict("7 turbo waterfall", ok, f"10^-3 at {s_turbo:.1f} dB (turbo W=0.3) vs {s_unc:.1f} dB (uncoded N=2,M=2): "
                                     f"gain {gain:.1f} dB (need >= 6); W=0.3 below W=0.12: {below} [{pairs}]; "
                                     f"{elapsed:.0f}s")


def test_c8_turbo_bound_shape(turbo_runs, verdict):
    w30 = turbo_runs[0]
    t0 = time.perf_counter()
    code = build_rsc("2,4,11")
    L = 4096
    iowef = compute_iowef(code, L, 8, 30, terminate=False, track_composition=True)
    twef = turbo_cwef(iowef, iowef, L, 8, 30)
    snr = w30.snr()
    bound = turbo_ber_bound(twef, ImConfig(8, 2), build_correlation(8, 0.30), snr_db_to_noise_var(snr), L)
    monotone = bool(np.all(np.diff(bound) <= 0))
    cliff = w30.snr_at_ber(TARGET_BER)
    above = snr >= cliff
    sim = w30.ber()
    violations = [(s, b, u) for s, b, u in zip(snr[above], sim[above], bound[above]) if b > u]
    elapsed = time.perf_counter() - t0
    ok = monotone and not violations and elapsed < 300
    detail = ", ".join(f"{s:.0f} dB sim {b:.1e} > bound {u:.1e}" for s, b, u in violations) or "none"
    verdict("8 turbo bound", ok, f"monotone: {monotone}; points above the {cliff:.1f} dB cliff where sim exceeds "
                                 f"bound: {detail}; {elapsed:.0f}s")


# 9 ---------------------------------------------------------------------------

EXIT_L = 24649


@pytest.fixture(scope="module")
def exit_code():
    return TurboCode(build_rsc("2,4,11"), Interleaver.random(EXIT_L, 9))


def trajectory(tc, snr_db, seed=9, n_iters=15):
    im = ImConfig(8, 2)
    rng = np.random.default_rng(seed)
    return exit_trajectory(tc, im, build_correlation(8, 0.12), float(snr_db_to_noise_var(snr_db)), n_iters, rng)


def test_c9_exit_tunnel(exit_code, verdict):
    t0 = time.perf_counter()
    k_tcm = exit_code.k
    hi_snr = 6.2 + SNR_OFFSET_DB
    hi = max(ie for _, _, ie in trajectory(exit_code, hi_snr))
    lo = max(ie for _, _, ie in trajectory(exit_code, hi_snr - 3.0))
    escapes = hi >= 0.95 * k_tcm
    stalls = lo < 0.5 * k_tcm
    elapsed = time.perf_counter() - t0
    ok = escapes and stalls and elapsed < 1200
    verdict("9 EXIT", ok, f"{hi_snr:.1f} dB: max I_E {hi:.3f} (escape needs >= {0.95 * k_tcm:.2f}); "
                          f"{hi_snr - 3:.1f} dB: max I_E {lo:.3f} (stall needs < {0.5 * k_tcm:.2f}); {elapsed:.0f}s")


def test_exit_tunnel_opens_at_high_snr(exit_code):
    traj = trajectory(exit_code, 30.0)
    assert max(ie for _, _, ie in traj) >= 0.95 * exit_code.k


# 10 --------------------------------------------------------------------------

def property_checks(tmp_path):
    rng = np.random.default_rng(10)
    checks = {}

    ok = True
    for n, m in ((2, 2), (4, 4), (8, 4), (16, 2), (4, 16)):
        cfg, c = ImConfig(n, m), build_constellation(m)
        ok &= all(im_demap(im_map(int_to_bits(w, cfg.k), cfg, c), cfg, c) == int_to_bits(w, cfg.k)
                  for w in range(2**cfg.k))
    checks["im_map bijection"] = ok

    ok = True
    for g in ("2,4,11", "13,15,17,11"):
        code = build_rsc(g)
        for _ in range(50):
            a, b = rng.integers(0, 2**code.input_arity, (2, 30))
            ok &= np.array_equal(encode_words(code, a ^ b)[0], encode_words(code, a)[0] ^ encode_words(code, b)[0])
    checks["encoder linearity"] = bool(ok)

    code = build_rsc("5,7")
    ok = True
    for _ in range(200):
        info = rng.integers(0, 2, 30)
        bits = rsc_encode(code, info, terminate=True)
        bits[rng.choice(bits.size, 2, replace=False)] ^= 1
        ok &= np.array_equal(viterbi_decode_hard(code, bits), info)
    checks["Viterbi radius"] = bool(ok)

    err = 0.0
    for n in (2, 4, 8, 16):
        corr = build_correlation(n, 0.4)
        d = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        top = np.max(np.linalg.eigvals(np.outer(d, d.conj()) @ corr.entries).real)
        err = max(err, abs(rank_one_eigenvalue(d, corr) - top) / max(1.0, top))
    checks["rank-one identity"] = err <= 1e-9

    ok = True
    for g, L in (("2,4,11", 4), ("5,7", 6), ("13,15,17,11", 2)):
        c = build_rsc(g)
        ok &= compute_iowef(c, L, c.input_arity * L, 60).total() == 2 ** (c.input_arity * L)
    checks["IOWEF total"] = bool(ok)

    c = build_rsc("2,4,11")
    L = 6
    inputs = np.array(list(itertools.product(range(4), repeat=L)))
    z1 = np.array([int(np.sum(encode_words(c, u)[0] & 1)) for u in inputs])
    w = np.array([sum(bin(int(x)).count("1") for x in u) for u in inputs])
    radix = 4 ** np.arange(L - 1, -1, -1)
    avg: dict = {}
    perms = list(itertools.permutations(range(L)))
    for perm in perms:
        for key in zip(w, z1 + z1[inputs[:, list(perm)] @ radix]):
            avg[key] = avg.get(key, 0) + 1 / len(perms)
    e = compute_iowef(c, L, 12, 12, terminate=False, track_composition=True)
    cw = turbo_cwef(e, e, L, 12, 12).counts
    checks["uniform interleaver"] = set(cw) == {(int(a), int(a), int(z)) for a, z in avg} and all(
        abs(cw[(int(a), int(a), int(z))] - v) < 1e-9 for (a, z), v in avg.items())

    argv = ["ber-sim", "--ports", "4", "--mod", "4", "--fa-size", "0.5", "--snr", "10:5:25", "--trials", "50000"]
    outs = [tmp_path / f"run{i}.csv" for i in range(2)]
    codes = [main(argv + ["--out", str(o)]) for o in outs]
    checks["determinism"] = codes == [0, 0] and outs[0].read_bytes() == outs[1].read_bytes()
    return checks


def test_c10_property_suites(tmp_path, verdict):
    t0 = time.perf_counter()
    checks = property_checks(tmp_path)
    elapsed = time.perf_counter() - t0
    failed = [k for k, v in checks.items() if not v]
    ok = not failed and elapsed < 300
    verdict("10 properties", ok, f"{len(checks) - len(failed)}/{len(checks)} hold"
                                 + (f" (failed: {', '.join(failed)})" if failed else "") + f"; {elapsed:.0f}s")
