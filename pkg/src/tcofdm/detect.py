"""FFT demodulation, trellis transition metrics and turbo detection.

Metric tables are returned as natural logs with shape (Ld2, 4, 2), indexed by
``[data position, trellis state, input bit]``. The QPSK symbol on an edge is
``qpsk_map(input bit, parity bit)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from .config import SystemConfig
from .turbo import RSC, qpsk_map, turbo_decode

# QPSK_TABLE[2*b_i + b_q] = qpsk_map(b_i, b_q)
QPSK_TABLE = qpsk_map([0, 0, 1, 1], [0, 1, 0, 1])
EDGE_SYMBOL = 2 * np.arange(2)[None, :] + RSC.parity  # (state, input) -> table index


def demod_fft(r, m2: int, Ld: int) -> np.ndarray:
    """Unnormalized Ld-point FFT of r[:, m2 : m2+Ld] per receive antenna."""
    r = np.atleast_2d(r)
    if m2 < 0 or m2 + Ld > r.shape[1]:
        raise ValueError(f"data block at m2={m2} exceeds the received buffer of {r.shape[1]} samples")
    return sfft.fft(r[:, m2:m2 + Ld], axis=1)


@dataclass(frozen=True)
class DemodGrid:
    """Subcarrier observations plus the metric noise scale ``2 Ld sigma_w^2``."""

    R: np.ndarray
    noise_scale: float


def _edges(per_symbol: np.ndarray) -> np.ndarray:
    return per_symbol[:, EDGE_SYMBOL]


def joint_distance(R, H, decoder: int) -> np.ndarray:
    """Z[i, s]: reconstruction distance with decoder's antenna sending QPSK_TABLE[s].

    The other antenna's symbol is minimized over all four QPSK points.
    ``R`` has shape (Nr, n) and ``H`` shape (Nr, 2, n).
    """
    R = np.asarray(R)
    H = np.asarray(H)
    if H.shape[1] != 2:
        raise ValueError("joint metrics are defined for two transmit antennas")
    own = decoder - 1
    other = 1 - own
    # (Nr, n, own symbol, other symbol)
    resid = (R[:, :, None, None]
             - H[:, own, :, None, None] * QPSK_TABLE[None, None, :, None]
             - H[:, other, :, None, None] * QPSK_TABLE[None, None, None, :])
    dist = np.sum(resid.real ** 2 + resid.imag ** 2, axis=0)
    return dist.min(axis=2)


def gamma_joint(R, H, sigma_w_sq: float, Ld: int, decoder: int) -> np.ndarray:
    """Log transition metrics of one constituent decoder in joint 2x2 mode."""
    z = joint_distance(R, H, decoder)
    return _edges(-z / (2 * Ld * sigma_w_sq))


def gamma_diversity(R, H, sigma_w_sq: float, Ld: int) -> np.ndarray:
    """Log transition metrics from Nr diversity arms of one transmit antenna.

    ``R`` and ``H`` have shape (Nr, n); the log metric is the sum over arms.
    """
    R = np.atleast_2d(R)
    H = np.atleast_2d(H)
    resid = R[:, :, None] - H[:, :, None] * QPSK_TABLE[None, None, :]
    dist = np.sum(resid.real ** 2 + resid.imag ** 2, axis=0)
    return _edges(-dist / (2 * Ld * sigma_w_sq))


def metric_tables(cfg: SystemConfig, carriers, R, H, sigma_w_sq: float):
    """Both decoders' log metric tables over the data carriers.

    Joint mode: ``R`` (Nr, Ld), ``H`` (Nr, Nt, Ld).
    Near-capacity mode: ``R`` and ``H`` are (Nt, Nr, Ld), one block per carrier.
    """
    if cfg.mode == "joint-mimo":
        Rd, Hd = R[:, carriers], H[:, :, carriers]
        return (gamma_joint(Rd, Hd, sigma_w_sq, cfg.Ld, 1),
                gamma_joint(Rd, Hd, sigma_w_sq, cfg.Ld, 2))
    return tuple(gamma_diversity(R[d][:, carriers], H[d][:, carriers], sigma_w_sq, cfg.Ld)
                 for d in range(2))


def detect_frame(cfg: SystemConfig, structure, R, H, sigma_w_sq: float, bits=None):
    """Turbo-decode one frame; returns ``(decided bits, bit errors or None)``."""
    lg1, lg2 = metric_tables(cfg, structure.data_carriers, R, H, sigma_w_sq)
    decided = turbo_decode(lg1, lg2, structure.turbo_map, cfg.turbo_iters)
    errors = None if bits is None else int(np.count_nonzero(decided != np.asarray(bits)))
    return decided, errors
