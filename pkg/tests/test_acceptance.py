"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is printed in the pytest terminal
summary. Statistical criteria use master seed 0 throughout.
"""

import math
import time

import numpy as np
import pytest

from tcofdm.capacity import capacity_bits, design_lpf, min_snr_per_bit, shaped_psd, snr_variance_report
from tcofdm.channel import complex_gaussian, draw_channel, draw_flat_iid, propagate
from tcofdm.config import SystemConfig, derive_lengths
from tcofdm.framer import assemble_frame, build_chest_matrix, build_preamble, build_structure
from tcofdm.harness import RunSpec, run_point, sweep
from tcofdm.sync import estimate_channel, superfine_fo
from tcofdm.turbo import LLR_CLAMP, RSC, InterleaverMap, bcjr_decode, qpsk_map, turbo_encode

SEED = 0
NEARCAP_IDEAL = dict(mode="near-capacity", receiver="ideal", Lh=1, sigma_f_sq=0.5, Lp=0, B=0, Lo=0, Ld2=4096)


def test_1_preamble_orthogonality(report):
    t0 = time.perf_counter()
    worst_cross = worst_self = 0.0
    for lp, lh in [(8, 2), (512, 10)]:
        ld = 2 * lp
        while ld <= 4096:
            cfg = SystemConfig(Lp=lp, Lh=lh, Ld=ld, B=0, Ld2=ld // 2, Lo=ld // 4)
            d = derive_lengths(cfg)
            for seed in range(3):
                S = build_chest_matrix(build_preamble(cfg, seed), d)
                worst_cross = max(worst_cross, np.abs(S[0].conj().T @ S[1]).max())
                for t in range(2):
                    dev = S[t].conj().T @ S[t] - (2 * lp / ld) * np.eye(d.Lhr)
                    worst_self = max(worst_self, np.abs(dev).max())
            ld *= 2
    dt = time.perf_counter() - t0
    ok = worst_cross <= 1e-9 and worst_self <= 1e-9 and dt < 5
    report(1, ok, f"cross {worst_cross:.1e}, self deviation {worst_self:.1e} (<=1e-9), {dt:.2f}s (<5s)")


def test_2_ml_channel_estimation(report):
    t0 = time.perf_counter()
    cfg = SystemConfig(Lp=1024)
    d = derive_lengths(cfg)
    st = build_structure(cfg, SEED)
    chest = build_chest_matrix(st.preamble, d)
    rng = np.random.default_rng(SEED)
    frame = assemble_frame(cfg, st, rng.integers(0, 2, cfg.Ld2), d)
    ch = draw_channel(cfg, rng)
    clean = propagate(frame.samples, ch.taps, 0.0, 0.0, None)

    worst = 0.0
    for m0 in (cfg.Lh - 1, 0):
        est = estimate_channel(clean, chest, m0 + cfg.Lh - 1, cfg.Ld)
        expected = np.zeros_like(est.taps)
        shift = cfg.Lh - 1 - m0
        expected[:, :, shift:shift + cfg.Lh] = ch.taps
        worst = max(worst, np.abs(est.taps - expected).max())

    sigma = 0.01
    m1 = 2 * cfg.Lh - 2
    expected = np.zeros((cfg.Nr, cfg.Nt, d.Lhr), dtype=complex)
    expected[:, :, :cfg.Lh] = ch.taps
    trials = 2000
    acc = np.zeros((cfg.Nr, cfg.Nt))
    window = clean[:, m1:m1 + cfg.Lp]
    for _ in range(trials):
        noisy = window + complex_gaussian(rng, window.shape, sigma)
        err = estimate_channel(noisy, chest, 0, cfg.Ld).taps - expected
        acc += np.sum(np.abs(err) ** 2, axis=2)
    trace = acc / trials
    target = d.Lhr * sigma * cfg.Ld / cfg.Lp
    rel = np.abs(trace / target - 1).max()
    dt = time.perf_counter() - t0
    ok = worst <= 1e-9 and rel <= 0.05 and dt < 60
    report(2, ok, f"noiseless error {worst:.1e} (<=1e-9), covariance trace off by {100 * rel:.2f}% (<=5%), {dt:.1f}s")


def exhaustive_posteriors(gamma, prior):
    n = gamma.shape[0]
    seqs = (np.arange(2 ** n)[:, None] >> np.arange(n)[None, :]) & 1
    logp = np.zeros(2 ** n)
    state = np.zeros(2 ** n, dtype=np.int64)
    for k in range(n):
        u = seqs[:, k]
        logp += np.log(gamma[k, state, u]) + np.where(u == 0, prior[k] / 2, -prior[k] / 2)
        state = RSC.next_state[state, u]
    p = np.exp(logp - logp.max())
    llr = np.array([np.log(p[seqs[:, k] == 0].sum() / p[seqs[:, k] == 1].sum()) for k in range(n)])
    return np.clip(llr, -LLR_CLAMP, LLR_CLAMP)


def test_3_bcjr_matches_exhaustive_map(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    cand = qpsk_map(np.arange(2)[None, :], RSC.parity)
    worst = 0.0
    blocks = 100
    for _ in range(blocks):
        bits = rng.integers(0, 2, 16)
        _, p1, _ = turbo_encode(bits, InterleaverMap.identity(16))
        r = qpsk_map(bits, p1) + complex_gaussian(rng, 16, 0.5)
        gamma = np.exp(-np.abs(r[:, None, None] - cand[None]) ** 2 / 2.0)
        prior = rng.normal(0, 1.5, 16)
        post = bcjr_decode(gamma, prior).posterior
        worst = max(worst, np.abs(post - exhaustive_posteriors(gamma, prior)).max())
    dt = time.perf_counter() - t0
    ok = worst <= 1e-9 and dt < 60
    report(3, ok, f"{blocks} blocks, max posterior deviation {worst:.1e} (<=1e-9), {dt:.1f}s")


def test_4_acquisition_at_zero_db(report):
    t0 = time.perf_counter()
    frames = 300
    stats = {lp: run_point(SystemConfig(Lp=lp), 0.0, frames, SEED) for lp in (512, 1024, 4096)}
    rates = [stats[lp].erasure_rate for lp in (512, 1024, 4096)]
    decreasing = rates[0] > rates[1] > rates[2]
    fo_max = stats[1024].fo_max_coarse
    dt = time.perf_counter() - t0
    ok = decreasing and fo_max <= 2.5e-2 and dt < 1800
    report(4, ok, "erasure P(Lp=512,1024,4096) = " + ", ".join(f"{r:.4f}" for r in rates)
           + f" (strictly decreasing: {decreasing}); coarse FO max at Lp=1024 {fo_max:.2e} (<=2.5e-2); {dt:.0f}s")


def test_5_superfine_quantized_injection(report):
    t0 = time.perf_counter()
    cfg = SystemConfig(Lp=1024)
    d = derive_lengths(cfg)
    st = build_structure(cfg, SEED)
    rng = np.random.default_rng(SEED)
    frame = assemble_frame(cfg, st, rng.integers(0, 2, cfg.Ld2), d)
    ch = draw_channel(cfg, rng)
    r = propagate(frame.samples, ch.taps, 0.0, 0.0, None)
    m2 = cfg.Lp + d.Lcs + d.Lcp
    H = np.fft.fft(ch.taps, cfg.Ld, axis=2)
    step = 2 * np.pi / (cfg.I * cfg.Ld)
    worst = 0.0
    for k in range(-3, 4):
        block = r[:, m2:m2 + cfg.Ld] * np.exp(1j * k * step * np.arange(cfg.Ld))
        omega, _ = superfine_fo(block, H, st.postamble, st.postamble_carriers, cfg.I)
        worst = max(worst, abs(omega - k * step) / step)
    dt = time.perf_counter() - t0
    ok = worst < 1.0 and dt < 60
    report(5, ok, f"k=-3..3 recovered within {worst:.2e} quantization steps (<1), {dt:.1f}s")


def test_6_joint_ideal_ber(report):
    t0 = time.perf_counter()
    cfg = SystemConfig(receiver="ideal")
    frames = 500
    a = run_point(cfg, 4.5, frames, SEED)
    b = run_point(cfg, 5.5, frames, SEED)
    dt = time.perf_counter() - t0
    ok = a.ber <= 1e-3 and b.ber <= 1e-4 and a.failures == b.failures == 0 and dt < 2700
    report(6, ok, f"{frames} frames: BER {a.ber:.2e} at 4.5 dB (<=1e-3), {b.ber:.2e} at 5.5 dB (<=1e-4), {dt:.0f}s")


def test_7_near_capacity_ber(report):
    t0 = time.perf_counter()
    frames = 200
    ber = {nr: run_point(SystemConfig(Nr=nr, **NEARCAP_IDEAL), 2.5, frames, SEED).ber for nr in (1, 2, 4)}
    monotone = ber[1] >= ber[2] >= ber[4]
    dt = time.perf_counter() - t0
    ok = ber[1] <= 1e-3 and monotone and dt < 1800
    report(7, ok, f"{frames} frames at 2.5 dB: BER Nr=1 {ber[1]:.2e} (<=1e-3), Nr=2 {ber[2]:.2e}, "
                  f"Nr=4 {ber[4]:.2e} (non-increasing: {monotone}), {dt:.0f}s")


def test_8_capacity_formulas(report):
    t0 = time.perf_counter()
    limit_db = min_snr_per_bit(1e-6).snr_b_db
    fp = max(abs(capacity_bits(C * min_snr_per_bit(C).snr_b) - C) for C in (0.5, 1, 2, 4))
    dt = time.perf_counter() - t0
    ok = abs(limit_db + 1.5917) <= 1e-3 and fp <= 1e-9 and dt < 1
    report(8, ok, f"limit {limit_db:.5f} dB (-1.5917 +-1e-3), fixed-point error {fp:.1e} (<=1e-9)")


def test_9_snr_variance(report):
    t0 = time.perf_counter()
    lh, ld, sf = 10, 4096, 0.5
    cfg = SystemConfig(Nt=1, Nr=1, Lh=lh, Ld=ld, sigma_f_sq=sf, mode="near-capacity", receiver="ideal",
                       Lp=0, B=0, Lo=0, Ld2=ld)
    rng = np.random.default_rng(SEED)
    frames = 10_000
    flat = np.array([np.mean(np.abs(draw_flat_iid(cfg, rng).gains) ** 2) for _ in range(frames)])
    multi = np.array([np.sum(np.abs(draw_channel(cfg, rng).taps) ** 2) for _ in range(frames)])
    rep = snr_variance_report(lh, ld, sf)
    e1 = abs(flat.var(ddof=1) / rep.sigma1_sq - 1)
    e2 = abs(multi.var(ddof=1) / rep.sigma2_sq - 1)
    ratio = multi.var(ddof=1) / flat.var(ddof=1)
    dt = time.perf_counter() - t0
    ok = e1 <= 0.1 and e2 <= 0.1 and abs(rep.ratio / 400 - 1) <= 0.1 and dt < 300
    report(9, ok, f"sample variances off by {100 * e1:.1f}% / {100 * e2:.1f}% (<=10%), "
                  f"ratio {ratio:.0f} (closed form {rep.ratio:.1f}, ~400), {dt:.1f}s")


def test_10_lpf_design(report):
    t0 = time.perf_counter()
    Ts = 1.0
    design = design_lpf(math.pi / 10, math.pi / 20)
    dc = abs(design.response(0.0)[0])
    bw = shaped_psd(design, 2 / 4096, Ts).bandwidth
    dt = time.perf_counter() - t0
    ok = len(design) == 160 and abs(dc - 1) <= 0.01 and abs(bw * 20 * Ts - 1) <= 0.1 and dt < 1
    report(10, ok, f"{len(design)} taps (160), DC gain {dc:.4f} (1 +-1%), -40 dB bandwidth {bw:.4f}/Ts "
                   f"(0.05/Ts +-10%), {dt:.2f}s")


def test_11_determinism(report, tmp_path):
    cfg = SystemConfig(Ld=1024, Lp=256, B=64, Ld2=768, Lo=128)
    outputs = []
    for workers in (1, 2, 8):
        out = tmp_path / f"w{workers}.csv"
        sweep(RunSpec(cfg, (0.0, 3.0), 16, seed=SEED, workers=workers, out=str(out)), echo=None)
        outputs.append(out.read_bytes())
    again = tmp_path / "again.csv"
    sweep(RunSpec(cfg, (0.0, 3.0), 16, seed=SEED, workers=1, out=str(again)), echo=None)
    ok = all(o == outputs[0] for o in outputs) and again.read_bytes() == outputs[0]
    report(11, ok, "sweep output byte-identical with 1, 2 and 8 workers and on re-run" if ok
           else "sweep outputs differ across worker counts")
