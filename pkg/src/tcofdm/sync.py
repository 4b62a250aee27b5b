"""Start-of-frame detection, channel estimation and carrier recovery.

All functions work on one carrier link: ``r`` has shape (Nr, n) and the known
preambles ``s1`` shape (Nt, Lp), with Nt = 1 for a near-capacity link.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from .config import DerivedLengths, SystemConfig, derive_lengths
from .detect import demod_fft


def bin_centers(halfwidth: float, nbins: int) -> np.ndarray:
    """Centres of ``nbins`` equal bins spanning [-halfwidth, halfwidth]."""
    return -halfwidth + (2 * np.arange(nbins) + 1) * halfwidth / nbins


def _grid_search(r_row: np.ndarray, templates: np.ndarray, freqs: np.ndarray):
    """Maximize |(r e^{-j f n}) * conj(reversed template)| over lag and f.

    Returns ``(lag, freq index, peak)`` per template; ties go to the lowest
    frequency index, then the lowest lag.
    """
    n = r_row.size
    lt = templates.shape[1]
    n_lags = n + lt - 1
    nfft = sfft.next_fast_len(n_lags)
    rot = r_row[None, :] * np.exp(-1j * np.outer(freqs, np.arange(n)))
    X = sfft.fft(rot, nfft, axis=1)
    T = sfft.fft(np.conj(templates[:, ::-1]), nfft, axis=1)
    out = []
    for tpl in T:
        mag = np.abs(sfft.ifft(X * tpl[None, :], axis=1)[:, :n_lags])
        flat = int(np.argmax(mag))
        b, lag = divmod(flat, n_lags)
        out.append((lag, b, mag[b, lag]))
    return out


@dataclass(frozen=True)
class SofResult:
    """Per (nr, nt) correlation peaks of the coarse search."""

    m_hat: np.ndarray  # (Nr, Nt) sample index of the peak
    nu_hat: np.ndarray  # (Nr, Nt) winning bin centre, radians/sample
    peak: np.ndarray  # (Nr, Nt)
    erased: bool
    omega_coarse: float


def detect_sof_coarse(r, s1, cfg: SystemConfig) -> SofResult:
    r = np.atleast_2d(r)
    s1 = np.atleast_2d(s1)
    lp = s1.shape[1]
    freqs = bin_centers(cfg.cfo_max, cfg.B1)
    nr, nt = r.shape[0], s1.shape[0]
    m_hat = np.zeros((nr, nt), dtype=np.int64)
    nu_hat = np.zeros((nr, nt))
    peak = np.zeros((nr, nt))
    for a in range(nr):
        for t, (lag, b, pk) in enumerate(_grid_search(r[a], s1, freqs)):
            m_hat[a, t], nu_hat[a, t], peak[a, t] = lag, freqs[b], pk
    erased = bool(np.any((m_hat < lp - 1) | (m_hat > lp + cfg.Lh - 2)))
    return SofResult(m_hat, nu_hat, peak, erased, float(nu_hat.mean()))


@dataclass(frozen=True)
class ChannelEstimate:
    taps: np.ndarray  # (Nr, Nt, Lhr)
    freq: np.ndarray  # (Nr, Nt, Ld)


def estimate_channel(r_aligned, chest: np.ndarray, m1: int, Ld: int) -> ChannelEstimate:
    """Per-antenna least-squares (ML) fit of the preamble window r[m1 : m1+Lp].

    ``chest`` holds the (Nt, Lp, Lhr) chest matrices; ``r_aligned`` must
    already be free of the frequency offset.
    """
    r_aligned = np.atleast_2d(r_aligned)
    nt, lp, lhr = chest.shape
    if m1 < 0 or m1 + lp > r_aligned.shape[1]:
        raise ValueError(f"preamble window at m1={m1} exceeds the received buffer")
    seg = r_aligned[:, m1:m1 + lp].T  # (Lp, Nr)
    taps = np.empty((r_aligned.shape[0], nt, lhr), dtype=complex)
    for t in range(nt):
        S = chest[t]
        gram = S.conj().T @ S
        try:
            taps[:, t, :] = np.linalg.solve(gram, S.conj().T @ seg).T
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError("singular channel estimation matrix") from exc
    return ChannelEstimate(taps, np.fft.fft(taps, Ld, axis=2))


def fine_fo(r, est: ChannelEstimate, s1, cfg: SystemConfig, omega_coarse: float) -> float:
    """Residual offset after the coarse stage, matched to the estimated channel output."""
    r = np.atleast_2d(r)
    s1 = np.atleast_2d(s1)
    nr, nt = r.shape[0], s1.shape[0]
    nus = bin_centers(cfg.fine_halfwidth, cfg.B2)
    total = 0.0
    for a in range(nr):
        y1 = np.stack([np.convolve(s1[t], est.taps[a, t]) for t in range(nt)])
        for lag, b, pk in _grid_search(r[a], y1, omega_coarse + nus):
            total += nus[b]
    return total / (nr * nt)


def superfine_fo(r_data, H_est, postamble, carriers, I: int, window: int | None = None):
    """Residual offset from the interpolated-FFT postamble matched filter.

    Parameters
    ----------
    r_data : ndarray, shape (Nr, Ld)
        Data block starting at m2, coarse and fine offsets removed.
    H_est : ndarray, shape (Nr, Nt, Ld)
        Estimated channel frequency response.
    postamble : ndarray, shape (Nt, Lo)
        Known postamble symbols in logical order.
    carriers : ndarray, shape (Lo,)
        Subcarrier of each postamble symbol after interleaving.
    I : int
        Interpolation factor.
    window : int, optional
        Half-width of the peak search around I*Ld - 1, default 4*I.

    Returns
    -------
    omega : float
        Offset estimate averaged over receive antennas.
    m3 : ndarray, shape (Nr,)
        Peak position of each antenna's matched-filter output.
    """
    r_data = np.atleast_2d(r_data)
    nr, ld = r_data.shape
    n_fft = I * ld
    w = 4 * I if window is None else window
    R = sfft.fft(r_data, n_fft, axis=1)
    # expected postamble response at each interleaved carrier
    G = np.einsum("atk,tk->ak", H_est[:, :, carriers], postamble)
    shifts = np.arange(-w, w + 1)
    idx = (carriers[None, :] * I + shifts[:, None]) % n_fft
    corr = np.abs(np.einsum("ask,ak->as", R[:, idx], np.conj(G)))
    s_hat = shifts[np.argmax(corr, axis=1)]
    m3 = n_fft - 1 + s_hat
    omega = 2 * np.pi * float(np.sum(m3 - n_fft + 1)) / (n_fft * nr)
    return omega, m3


def estimate_noise_var(r_aligned, chest: np.ndarray, taps: np.ndarray, m1: int) -> float:
    """Per-dimension noise variance from the residual of the preamble fit."""
    r_aligned = np.atleast_2d(r_aligned)
    nt, lp, _ = chest.shape
    seg = r_aligned[:, m1:m1 + lp]
    fit = np.einsum("tpc,atc->ap", chest, taps)
    resid = seg - fit
    return float(np.sum(np.abs(resid) ** 2) / (2 * lp * r_aligned.shape[0]))


def derotate(r, omega: float) -> np.ndarray:
    r = np.atleast_2d(r)
    return r * np.exp(-1j * omega * np.arange(r.shape[1]))[None, :]


@dataclass(frozen=True)
class SyncAndEstimates:
    """Outcome of the practical receiver's acquisition on one link."""

    sof: SofResult
    erased: bool
    omega_coarse: float
    omega_fine: float = 0.0
    omega_superfine: float = 0.0
    m1: int = -1
    m2: int = -1
    estimate: ChannelEstimate | None = None
    sigma_w_sq: float = float("nan")
    grid: np.ndarray | None = None  # (Nr, Ld) data-block FFT, all offsets removed

    @property
    def omega_total(self) -> float:
        return self.omega_coarse + self.omega_fine + self.omega_superfine


def synchronize(r, s1, chest, postamble, carriers, cfg: SystemConfig,
                derived: DerivedLengths | None = None) -> SyncAndEstimates:
    """Run the full acquisition chain on one link and demodulate its data block."""
    d = derived or derive_lengths(cfg)
    r = np.atleast_2d(r)
    sof = detect_sof_coarse(r, s1, cfg)
    if sof.erased:
        return SyncAndEstimates(sof, True, sof.omega_coarse)
    w_c = sof.omega_coarse
    m0 = int(sof.m_hat[0, 0]) - cfg.Lp + 1
    m1 = m0 + cfg.Lh - 1
    est = estimate_channel(derotate(r, w_c), chest, m1, cfg.Ld)

    w_f = fine_fo(r, est, s1, cfg, w_c)
    r2 = derotate(r, w_c + w_f)
    est = estimate_channel(r2, chest, m1, cfg.Ld)

    m2 = m1 + cfg.Lp + d.Lcs
    w_sf, _ = superfine_fo(r2[:, m2:m2 + cfg.Ld], est.freq, postamble, carriers, cfg.I)
    r3 = derotate(r, w_c + w_f + w_sf)
    est = estimate_channel(r3, chest, m1, cfg.Ld)
    sigma = estimate_noise_var(r3, chest, est.taps, m1)
    grid = demod_fft(r3, m2, cfg.Ld)
    return SyncAndEstimates(sof, False, w_c, w_f, w_sf, m1, m2, est, sigma, grid)
