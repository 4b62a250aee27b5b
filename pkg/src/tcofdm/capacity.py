"""Capacity limits, SNR-per-frame variance and pulse-shaping filter design."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import firwin


@dataclass(frozen=True)
class CapacityPoint:
    C: float
    snr_b: float

    @property
    def snr_b_db(self) -> float:
        return 10 * math.log10(self.snr_b)


def min_snr_per_bit(C: float) -> CapacityPoint:
    """Minimum average SNR per bit for error-free signalling at C bits/transmission.

    Solves ``C = log2(1 + C * snr_b)``; the C -> 0 limit is ln 2.
    """
    if C < 0:
        raise ValueError(f"capacity must be nonnegative, got {C}")
    if C == 0:
        return CapacityPoint(0.0, math.log(2))
    # expm1 keeps precision for tiny C
    return CapacityPoint(C, math.expm1(C * math.log(2)) / C)


def capacity_bits(snr: float) -> float:
    """Bits per transmission over one complex dimension at linear SNR ``snr``."""
    if snr < 0:
        raise ValueError("snr must be nonnegative")
    return math.log2(1 + snr)


def log2_message_count(snr: float, n: int) -> float:
    """log2 of the number of distinguishable messages over ``n`` transmissions.

    The count itself, ``(1 + snr)**n``, overflows for realistic ``n``.
    """
    return n * capacity_bits(snr)


@dataclass(frozen=True)
class SnrVarianceReport:
    """Variance of the per-frame SNR proxy ``(1/Ld) sum |H_i|^2``.

    ``sigma1_sq`` is for gains i.i.d. over subcarriers, ``sigma2_sq`` for the
    Ld-point transform of an Lh-tap channel.
    """

    sigma1_sq: float
    sigma2_sq: float

    @property
    def ratio(self) -> float:
        return self.sigma2_sq / self.sigma1_sq


def snr_variance_report(Lh: int, Ld: int, sigma_f_sq: float) -> SnrVarianceReport:
    if min(Lh, Ld, sigma_f_sq) <= 0:
        raise ValueError("Lh, Ld and sigma_f_sq must be positive")
    s4 = sigma_f_sq ** 2
    return SnrVarianceReport(4 * Lh ** 2 * s4 / Ld, 4 * Lh * s4)


@dataclass(frozen=True)
class LpfDesign:
    taps: np.ndarray
    cutoff: float
    transition: float

    def __len__(self) -> int:
        return self.taps.size

    def response(self, omega) -> np.ndarray:
        """DTFT of the taps at digital frequencies ``omega`` (radians)."""
        n = np.arange(self.taps.size)
        return np.exp(-1j * np.outer(np.atleast_1d(omega), n)) @ self.taps


def lpf_length(transition: float) -> int:
    # Hamming window main-lobe rule: 8 pi / L = transition width; even length
    n = math.ceil(8 * math.pi / transition - 1e-9)
    return n + (n % 2)


def design_lpf(cutoff: float, transition: float) -> LpfDesign:
    """Hamming-windowed linear-phase lowpass filter with unity DC gain.

    ``cutoff`` is the edge of the occupied band. The underlying ideal lowpass
    sits in the middle of the transition band, at ``cutoff - transition / 2``,
    so the response is down in the stopband by ``cutoff``.
    """
    if not 0 < cutoff < math.pi:
        raise ValueError("cutoff must lie in (0, pi)")
    if not 0 < transition < math.pi or transition / 2 >= cutoff:
        raise ValueError("transition must lie in (0, pi) and be narrower than 2*cutoff")
    n = lpf_length(transition)
    edge = cutoff - transition / 2
    taps = firwin(n, edge / math.pi, window="hamming", scale=True)
    return LpfDesign(taps, cutoff, transition)


def equivalent_channel_span(lpf_taps: int, channel_taps: int) -> int:
    """Span seen by the receiver when the pulse-shaping filter precedes the channel."""
    return lpf_taps + channel_taps - 1


@dataclass(frozen=True)
class PsdCurve:
    freq: np.ndarray  # Hz, one period centred on 0
    psd: np.ndarray  # linear power per Hz
    bandwidth: float  # one-sided, where the PSD falls 40 dB below its peak

    @property
    def psd_db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 10 * np.log10(self.psd)

    def to_text(self) -> str:
        lines = ["# freq_hz psd_db"]
        lines += [f"{f:.6e} {p:.6e}" for f, p in zip(self.freq, self.psd_db)]
        return "\n".join(lines) + "\n"


def shaped_psd(design: LpfDesign, sigma_s_sq: float, Ts: float, n_points: int = 8192,
               floor_db: float = -40.0) -> PsdCurve:
    """Power spectral density of the filtered, D/A converted transmit signal.

    The continuous-time pulse spectrum is ``Ts`` times the filter DTFT inside
    the Nyquist band.
    """
    F = (np.arange(n_points) - n_points // 2) / (n_points * Ts)
    P = Ts * design.response(2 * np.pi * F * Ts)
    psd = (1 / Ts) * (sigma_s_sq / 2) * np.abs(P) ** 2
    above = np.nonzero(psd >= psd.max() * 10 ** (floor_db / 10))[0]
    bandwidth = float(np.max(np.abs(F[above])))
    return PsdCurve(F, psd, bandwidth)
