"""Quasi-static Rayleigh fading, carrier frequency offset and AWGN."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SystemConfig


def complex_gaussian(rng: np.random.Generator, shape, var_per_dim: float) -> np.ndarray:
    z = rng.standard_normal((2,) + tuple(np.atleast_1d(shape)))
    return np.sqrt(var_per_dim) * (z[0] + 1j * z[1])


@dataclass(frozen=True)
class ChannelRealization:
    """One frame's channel.

    ``taps`` has shape (Nr, Nt, Lh). ``cfo`` holds one offset (radians/sample)
    per carrier link: a single entry in joint-mimo mode, Nt entries in
    near-capacity mode where every transmit antenna has its own carrier.
    """

    taps: np.ndarray
    cfo: np.ndarray
    frame: int = 0


def draw_channel(cfg: SystemConfig, rng: np.random.Generator, frame: int = 0) -> ChannelRealization:
    taps = complex_gaussian(rng, (cfg.Nr, cfg.Nt, cfg.Lh), cfg.sigma_f_sq)
    cfo = rng.uniform(-cfg.cfo_max, cfg.cfo_max, size=cfg.n_links)
    return ChannelRealization(taps, cfo, frame)


def propagate(samples, taps, cfo: float, sigma_w_sq: float, rng: np.random.Generator | None) -> np.ndarray:
    """Received samples for one carrier link.

    ``samples`` (Nt, L) is convolved with ``taps`` (Nr, Nt, Lh), summed over
    transmit antennas, rotated by ``exp(j cfo n)`` and corrupted by complex
    AWGN of per-dimension variance ``sigma_w_sq``. Returns shape (Nr, L+Lh-1).
    """
    samples = np.atleast_2d(samples)
    taps = np.asarray(taps)
    if taps.ndim != 3 or taps.shape[1] != samples.shape[0]:
        raise ValueError(f"taps shape {taps.shape} does not match {samples.shape[0]} transmit antennas")
    nr, nt, lh = taps.shape
    n_out = samples.shape[1] + lh - 1
    y = np.zeros((nr, n_out), dtype=complex)
    for a in range(nr):
        for t in range(nt):
            y[a] += np.convolve(samples[t], taps[a, t])
    y *= np.exp(1j * cfo * np.arange(n_out))
    if sigma_w_sq > 0:
        y += complex_gaussian(rng, (nr, n_out), sigma_w_sq)
    return y


@dataclass(frozen=True)
class FlatIidChannel:
    """Per-subcarrier gains ``H[nt, l, i]``, independent over i and arm l."""

    gains: np.ndarray


def draw_flat_iid(cfg: SystemConfig, rng: np.random.Generator) -> FlatIidChannel:
    return FlatIidChannel(complex_gaussian(rng, (cfg.Nt, cfg.Nr, cfg.Ld), cfg.Lh * cfg.sigma_f_sq))
