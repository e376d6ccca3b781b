"""Simulation and analysis of N-modular-redundant systems with voting,
error detection and reconfiguration-based recovery."""

from .core import (DecodeResult, DecodeStatus, ErrorVector, Flat, Hierarchical3x3, Word,
                   detect_errors, hamming_decode, hamming_encode, parse_scheme,
                   tolerance_limit, vote, vote_fmr_formula, vote_hierarchical, vote_scheme)
from .recovery import (DEFAULT_MODEL, BitFlip, Blank, ReconfigPort, RecoveryModel, StuckAt,
                       apply_fault, calibrate_recovery_model, power_estimate,
                       recovery_duration)
from .engine import EventRecord, Metrics, SimConfig, detection_latency, run_simulation

__version__ = "0.1.0"
