"""Transmit frame construction.

Frequency-domain content per transmit antenna::

    [ buffer (B) | data + postamble, scattered by pi over B..B+Ld2+Lo | fill ]

Time-domain frame per antenna (length L)::

    [ preamble s1 (Lp) | cyclic suffix (Lcs) | cyclic prefix (Lcp) | data IFFT (Ld) ]
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import DerivedLengths, SystemConfig, derive_lengths
from .turbo import InterleaverMap, qpsk_map, turbo_encode


def random_qpsk(rng: np.random.Generator, shape) -> np.ndarray:
    bits = rng.integers(0, 2, size=(2,) + tuple(np.atleast_1d(shape)))
    return qpsk_map(bits[0], bits[1])


@dataclass(frozen=True)
class PreambleSpec:
    """Known preamble of every transmit antenna.

    ``freq[nt]`` holds the Lp subcarrier values and ``time[nt]`` their IFFT.
    ``perm`` is the preamble interleaver: antenna ``nt`` occupies subcarriers
    ``perm[nt*Lp/Nt : (nt+1)*Lp/Nt]`` in joint-mimo mode.
    """

    freq: np.ndarray
    time: np.ndarray
    perm: np.ndarray
    seed: object = None


def _coset_size(lp: int, lhr: int, nt: int) -> int:
    # Smallest power-of-two subgroup order M >= Lhr; the indicator of any union
    # of its cosets has zero DFT at lags 1..M-1, which makes the circular
    # autocorrelation vanish over the channel span.
    m = 1
    while m < lhr:
        m *= 2
    if m > lp or (lp // m) % nt:
        raise ValueError(
            f"cannot split Lp={lp} into {nt} orthogonal preambles for a "
            f"{lhr}-tap receiver channel span"
        )
    return m


def build_preamble(cfg: SystemConfig, seed) -> PreambleSpec:
    """Draw the per-antenna preambles.

    Joint-mimo mode gives each antenna Lp/Nt non-zero subcarriers, randomly
    interspersed and disjoint across antennas, of magnitude sqrt(2 Lp Nt / Ld).
    The supports are unions of cosets of an order-M subgroup (M >= Lhr), so the
    chest matrices are exactly orthogonal. Near-capacity mode uses one fully
    occupied preamble for all antennas.
    """
    rng = np.random.default_rng(seed)
    lp, nt, ld = cfg.Lp, cfg.Nt, cfg.Ld
    if lp == 0:
        empty = np.zeros((nt, 0), dtype=complex)
        return PreambleSpec(empty, empty.copy(), np.zeros(0, dtype=np.int64), seed)
    s_r = random_qpsk(rng, lp)
    freq = np.zeros((nt, lp), dtype=complex)

    if cfg.mode == "near-capacity":
        perm = np.arange(lp)
        freq[:] = np.sqrt(lp / ld) * s_r
    else:
        if lp % nt:
            raise ValueError(f"Lp={lp} is not divisible by Nt={nt}")
        m = _coset_size(lp, cfg.Lhr, nt)
        n_off = lp // m
        offsets = rng.permutation(n_off)
        per_ant = n_off // nt
        groups = []
        for a in range(nt):
            own = offsets[a * per_ant:(a + 1) * per_ant]
            sub = (own[:, None] + n_off * np.arange(m)[None, :]).ravel()
            groups.append(rng.permutation(sub))
        perm = np.concatenate(groups)
        chunk = lp // nt
        for a in range(nt):
            idx = slice(a * chunk, (a + 1) * chunk)
            freq[a, perm[idx]] = np.sqrt(lp * nt / ld) * s_r[idx]

    time = np.fft.ifft(freq, axis=1)
    return PreambleSpec(freq, time, perm, seed)


@dataclass(frozen=True)
class FrameStructure:
    """Everything the transmitter and receiver both know in advance."""

    preamble: PreambleSpec
    data_map: InterleaverMap  # pi over the Ld2 + Lo data/postamble positions
    turbo_map: InterleaverMap  # turbo-internal interleaver over Ld2 bits
    buffer: np.ndarray  # (Nt, B)
    postamble: np.ndarray  # (Nt, Lo)
    fill: np.ndarray  # (Nt, Ld - B - Ld2 - Lo)

    @property
    def data_carriers(self) -> np.ndarray:
        """Subcarrier index of each coded data symbol, in data order."""
        nd = len(self.turbo_map)
        return self.buffer.shape[1] + self.data_map.perm[:nd]

    @property
    def postamble_carriers(self) -> np.ndarray:
        nd = len(self.turbo_map)
        return self.buffer.shape[1] + self.data_map.perm[nd:]


def build_structure(cfg: SystemConfig, seed) -> FrameStructure:
    ss = np.random.SeedSequence(seed) if not isinstance(seed, np.random.SeedSequence) else seed
    pre_ss, map_ss, sym_ss = ss.spawn(3)
    preamble = build_preamble(cfg, pre_ss)
    data_map = InterleaverMap.from_seed(cfg.Ld2 + cfg.Lo, map_ss)
    # turbo interleaver: the order pi induces on the data positions
    turbo_map = InterleaverMap(np.argsort(np.argsort(data_map.perm[: cfg.Ld2])))
    rng = np.random.default_rng(sym_ss)
    known = random_qpsk(rng, (cfg.Nt, cfg.B + cfg.Lo + cfg.fill)).reshape(cfg.Nt, -1)
    return FrameStructure(
        preamble=preamble,
        data_map=data_map,
        turbo_map=turbo_map,
        buffer=known[:, : cfg.B],
        postamble=known[:, cfg.B: cfg.B + cfg.Lo],
        fill=known[:, cfg.B + cfg.Lo:],
    )


@dataclass(frozen=True)
class TxFrame:
    """One transmitted frame.

    ``samples`` has shape (Nt, L); ``data_freq`` (Nt, Ld) is the subcarrier
    content S3 that produced the data block.
    """

    samples: np.ndarray
    data_freq: np.ndarray
    bits: np.ndarray
    coded: tuple  # (systematic, parity1, parity2)


def data_symbols(cfg: SystemConfig, structure: FrameStructure, bits) -> tuple[np.ndarray, tuple]:
    """Coded QPSK symbols per antenna in data order, shape (Nt, Ld2).

    Antenna 1 carries (systematic, parity1); antenna 2 carries
    (interleaved systematic, parity2).
    """
    bits = np.asarray(bits, dtype=np.int8)
    if bits.size != cfg.Ld2:
        raise ValueError(f"expected {cfg.Ld2} data bits, got {bits.size}")
    if cfg.Nt != 2:
        raise ValueError("the turbo antenna mapping needs Nt = 2")
    sys_, p1, p2 = turbo_encode(bits, structure.turbo_map)
    syms = np.stack([qpsk_map(sys_, p1), qpsk_map(structure.turbo_map.interleave(sys_), p2)])
    return syms, (sys_, p1, p2)


def assemble_frame(cfg: SystemConfig, structure: FrameStructure, bits,
                   derived: DerivedLengths | None = None) -> TxFrame:
    d = derived or derive_lengths(cfg)
    syms, coded = data_symbols(cfg, structure, bits)
    logical = np.concatenate([syms, structure.postamble], axis=1)
    S3 = np.empty((cfg.Nt, cfg.Ld), dtype=complex)
    S3[:, : cfg.B] = structure.buffer
    S3[:, cfg.B + structure.data_map.perm] = logical
    S3[:, cfg.B + cfg.Ld2 + cfg.Lo:] = structure.fill
    s3 = np.fft.ifft(S3, axis=1)
    s1 = structure.preamble.time
    if cfg.Lp:
        suffix = s1[:, np.arange(d.Lcs) % cfg.Lp]
    else:
        suffix = np.zeros((cfg.Nt, d.Lcs), dtype=complex)
    prefix = s3[:, cfg.Ld - d.Lcp:]
    samples = np.concatenate([s1, suffix, prefix, s3], axis=1)
    return TxFrame(samples, S3, np.asarray(bits, dtype=np.int8), coded)


def overlapped_preamble(preamble: PreambleSpec, derived: DerivedLengths) -> np.ndarray:
    """s5[n] = s1[n] + s4[n - Lp]: the preamble followed by its cyclic suffix."""
    s1 = preamble.time
    lp = s1.shape[1]
    idx = np.arange(lp + derived.Lcs) % lp
    return s1[:, idx]


def build_chest_matrix(preamble: PreambleSpec, derived: DerivedLengths) -> np.ndarray:
    """Channel estimation matrices, shape (Nt, Lp, Lhr).

    Entry ``[nt, r, c]`` is ``s5[nt, Lhr - 1 + r - c]``.
    """
    s5 = overlapped_preamble(preamble, derived)
    lp = preamble.time.shape[1]
    lhr = derived.Lhr
    idx = lhr - 1 + np.arange(lp)[:, None] - np.arange(lhr)[None, :]
    return s5[:, idx]
