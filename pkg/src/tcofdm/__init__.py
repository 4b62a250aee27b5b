"""Turbo-coded MIMO-OFDM link simulator with a practical acquisition chain."""

from .config import ConfigError, SystemConfig, derive_lengths, load_config, parse_config
from .harness import AggregateStats, RunSpec, TrialRecord, run_frame, run_point, sweep

__all__ = [
    "AggregateStats",
    "ConfigError",
    "RunSpec",
    "SystemConfig",
    "TrialRecord",
    "derive_lengths",
    "load_config",
    "parse_config",
    "run_frame",
    "run_point",
    "sweep",
]
__version__ = "0.1.0"
