"""System parameters, derived frame lengths and SNR conversions.

A configuration is a flat ``key=value`` text file::

    # 2x2 joint MIMO, practical receiver
    Nt=2
    Nr=2
    Lp=1024
    mode=joint-mimo

Every key must be a :class:`SystemConfig` field; unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

# QPSK alphabet +-1 +-j
P_AV = 2.0

MODES = ("joint-mimo", "near-capacity")
RECEIVERS = ("ideal", "practical")

_MODE_ALIASES = {"joint": "joint-mimo", "nearcap": "near-capacity"}


class ConfigError(ValueError):
    """Raised when a configuration violates one of its invariants."""


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class SystemConfig:
    """All scalar parameters of the link.

    Lengths are in samples (time domain) or subcarriers (frequency domain).
    In near-capacity mode ``Nr`` counts the receive antennas dedicated to
    each transmit antenna.
    """

    Nt: int = 2
    Nr: int = 2
    Lp: int = 1024
    Ld: int = 4096
    Ld2: int = 3072
    Lo: int = 512
    B: int = 512
    Lh: int = 10
    sigma_f_sq: float = 0.5
    cfo_max: float = 0.04
    B1: int = 64
    B2: int = 64
    fine_halfwidth: float = 0.005
    I: int = 16
    turbo_iters: int = 8
    kappa: float = 0.5
    mode: str = "joint-mimo"
    receiver: str = "practical"

    def __post_init__(self):
        mode = _MODE_ALIASES.get(self.mode, self.mode)
        object.__setattr__(self, "mode", mode)
        self.validate()

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.receiver not in RECEIVERS:
            raise ConfigError(f"receiver must be one of {RECEIVERS}, got {self.receiver!r}")
        if self.Nt < 1 or self.Nr < 1:
            raise ConfigError("Nt >= 1 and Nr >= 1 required")
        if not _is_pow2(self.Ld):
            raise ConfigError(f"Ld must be a power of two, got {self.Ld}")
        # the ideal receiver needs no preamble, so Lp=0 is allowed there
        if not (_is_pow2(self.Lp) or (self.Lp == 0 and self.receiver == "ideal")):
            raise ConfigError(f"Lp must be a power of two, got {self.Lp}")
        if self.Ld2 < 1:
            raise ConfigError("Ld2 >= 1 required")
        if self.Lh < 1:
            raise ConfigError("Lh >= 1 required")
        if min(self.B, self.Lo) < 0:
            raise ConfigError("B and Lo must be nonnegative")
        if self.mode == "joint-mimo" and self.Lp % self.Nt:
            raise ConfigError(f"Lp mod Nt = 0 required in joint-mimo mode (Lp={self.Lp}, Nt={self.Nt})")
        if self.B + self.Ld2 + self.Lo > self.Ld:
            raise ConfigError(
                f"B + Ld2 + Lo <= Ld required ({self.B} + {self.Ld2} + {self.Lo} > {self.Ld})"
            )
        if not 0.0 < self.cfo_max < math.pi:
            raise ConfigError("0 < cfo_max < pi required")
        if not 0.0 < self.fine_halfwidth < self.cfo_max:
            raise ConfigError("0 < fine_halfwidth < cfo_max required")
        if self.B1 < 1 or self.B2 < 1 or self.I < 1:
            raise ConfigError("B1, B2 and I must be positive")
        if self.turbo_iters < 0:
            raise ConfigError("turbo_iters must be nonnegative")
        if self.sigma_f_sq <= 0 or self.kappa <= 0:
            raise ConfigError("sigma_f_sq and kappa must be positive")
        if self.receiver == "practical" and self.Lo < 1:
            raise ConfigError("the practical receiver needs a postamble (Lo >= 1)")

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    @property
    def Lhr(self) -> int:
        return 2 * self.Lh - 1

    @property
    def fill(self) -> int:
        """Trailing known subcarriers after the postamble."""
        return self.Ld - self.B - self.Ld2 - self.Lo

    @property
    def n_links(self) -> int:
        """Independent carrier links: one in joint mode, Nt in near-capacity mode."""
        return 1 if self.mode == "joint-mimo" else self.Nt


@dataclass(frozen=True)
class DerivedLengths:
    Lhr: int
    Lcp: int
    Lcs: int
    L: int
    sigma_s_sq: float


def derive_lengths(cfg: SystemConfig) -> DerivedLengths:
    cfg.validate()
    lhr = 2 * cfg.Lh - 1
    lcp = lcs = lhr - 1
    return DerivedLengths(
        Lhr=lhr,
        Lcp=lcp,
        Lcs=lcs,
        L=cfg.Lp + lcs + lcp + cfg.Ld,
        sigma_s_sq=2.0 / cfg.Ld,
    )


def channel_span_from_geometry(d0: float, baud: float, c: float = 3e8) -> int:
    """Channel span in taps for a delay spread of ``d0`` metres."""
    if d0 <= 0 or baud <= 0 or c <= 0:
        raise ValueError("d0, baud and c must all be positive")
    return max(1, round(d0 * baud / c))


def throughput(cfg: SystemConfig, derived: DerivedLengths | None = None) -> float:
    d = derived or derive_lengths(cfg)
    return cfg.Ld2 / (cfg.Ld + cfg.Lp + d.Lcp + d.Lcs)


def noise_var_for_snr(cfg: SystemConfig, snr_b: float) -> float:
    """Per-dimension noise variance giving average SNR per bit ``snr_b`` (linear)."""
    if snr_b <= 0:
        raise ValueError(f"snr_b must be positive, got {snr_b}")
    return cfg.Lh * cfg.sigma_f_sq * P_AV * cfg.Nr / (cfg.Ld * cfg.kappa * snr_b)


def snr_for_noise_var(cfg: SystemConfig, sigma_w_sq: float) -> float:
    if sigma_w_sq <= 0:
        raise ValueError(f"sigma_w_sq must be positive, got {sigma_w_sq}")
    return cfg.Lh * cfg.sigma_f_sq * P_AV * cfg.Nr / (cfg.Ld * cfg.kappa * sigma_w_sq)


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


_FIELDS = {f.name: f for f in dataclasses.fields(SystemConfig)}


def parse_values(text: str) -> dict:
    """Typed ``{field: value}`` pairs from key=value lines, without validation."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        ftype = _FIELDS[key].type
        try:
            if ftype == "int":
                values[key] = int(value)
            elif ftype == "float":
                values[key] = float(value)
            else:
                values[key] = value
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from exc
    return values


def parse_config(text: str) -> SystemConfig:
    return SystemConfig(**parse_values(text))


def load_config(path: str | Path) -> SystemConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def dump_config(cfg: SystemConfig) -> str:
    return "".join(f"{name}={getattr(cfg, name)}\n" for name in _FIELDS)
