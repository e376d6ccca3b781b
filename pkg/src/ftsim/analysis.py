"""Scheme comparison, Monte Carlo reliability and report emission."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np

from .core import (Flat, Hierarchical3x3, Scheme, Word, hamming_encode, placements,
                   tolerance_limit, vote_scheme)
from .engine import Metrics
from .recovery import Blank, FaultMode, RecoveryModel, apply_fault, calibration_residuals

GOLDEN_DATA = 0b1010
Z95 = 1.96


def golden_codeword() -> Word:
    return Word(hamming_encode(GOLDEN_DATA), 8)


# ---------------------------------------------------------------------------
# Table I style comparison

@dataclass(frozen=True)
class ComparisonRow:
    scheme: str
    simultaneous_faults: int
    survived: bool
    mitigation: bool


def has_mitigation(scheme: Scheme) -> bool:
    # flat schemes here are paired with reconfiguration; the 3x3 NMR is not
    return isinstance(scheme, Flat)


def survives(scheme: Scheme, n_faulty: int, mode: FaultMode = Blank(),
             golden: Word | None = None) -> bool:
    """True iff every placement of ``n_faulty`` faulty modules still votes golden."""
    golden = golden or golden_codeword()
    bad = apply_fault(mode, golden)
    n = scheme.n_modules
    for placement in placements(n, n_faulty):
        chosen = set(placement)
        outputs = [bad if i in chosen else golden for i in range(n)]
        if vote_scheme(scheme, outputs) != golden:
            return False
    return True


def compare_schemes(schemes: Sequence[Scheme], multiplicities: Sequence[int],
                    fault_mode: FaultMode = Blank()) -> list[ComparisonRow]:
    rows = []
    for scheme in schemes:
        for m in multiplicities:
            if m > scheme.n_modules:
                continue
            rows.append(ComparisonRow(scheme.name, m, survives(scheme, m, fault_mode),
                                      has_mitigation(scheme)))
    return rows


def measured_tolerance(scheme: Scheme, fault_mode: FaultMode = Blank()) -> int:
    """Largest fault count for which every placement is masked."""
    m = 0
    while m < scheme.n_modules and survives(scheme, m + 1, fault_mode):
        m += 1
    return m


def tolerance_table(schemes: Sequence[Scheme]) -> list[ComparisonRow]:
    """One row per scheme at its exhaustively measured tolerance limit."""
    return [ComparisonRow(s.name, measured_tolerance(s), True, has_mitigation(s))
            for s in schemes]


# ---------------------------------------------------------------------------
# Monte Carlo reliability

@dataclass(frozen=True)
class ReliabilityEstimate:
    scheme: str
    q: float
    replications: int
    failures: int
    failure_probability: float
    confidence_halfwidth: float
    exact: float

    def within(self, n_halfwidths: float = 3.0) -> bool:
        return abs(self.failure_probability - self.exact) <= n_halfwidths * self.confidence_halfwidth


def binomial_tail(n: int, k: int, p: float) -> float:
    """P(Bin(n, p) >= k)."""
    return sum(math.comb(n, i) * p**i * (1 - p)**(n - i) for i in range(k, n + 1))


def exact_failure_probability(scheme: Scheme, q: float) -> float:
    """Failure probability with independent Blank faults and a non-zero golden word."""
    if isinstance(scheme, Flat):
        return binomial_tail(scheme.n, scheme.threshold, q)
    group = binomial_tail(3, 2, q)
    return binomial_tail(3, 2, group)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        x = x + np.uint64(0x9E3779B97F4A7C15)
        x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return x ^ (x >> np.uint64(31))


def replication_uniforms(seed: int, reps: np.ndarray, n: int) -> np.ndarray:
    """Uniforms in [0, 1) for (replication, module), keyed only by seed and index.

    Counter-based (splitmix64 over ``rep * n + module``), so any chunking of
    the replications across workers reproduces the same draws.
    """
    key = _splitmix64(np.array([seed], dtype=np.uint64))[0]
    counters = reps.astype(np.uint64)[:, None] * np.uint64(n) + np.arange(n, dtype=np.uint64)
    bits = _splitmix64(counters ^ key)
    return (bits >> np.uint64(11)).astype(np.float64) * 2.0**-53


def vote_batch(outputs: np.ndarray, k: int, width: int) -> np.ndarray:
    """Row-wise per-bit k-of-n vote over an (R, n) array of unsigned words."""
    voted = np.zeros(outputs.shape[0], dtype=np.uint64)
    for j in range(width):
        ones = ((outputs >> np.uint64(j)) & np.uint64(1)).sum(axis=1)
        voted |= (ones >= k).astype(np.uint64) << np.uint64(j)
    return voted


def vote_scheme_batch(scheme: Scheme, outputs: np.ndarray, width: int) -> np.ndarray:
    if isinstance(scheme, Hierarchical3x3):
        groups = np.column_stack([vote_batch(outputs[:, i:i + 3], 2, width)
                                  for i in range(0, 9, 3)])
        return vote_batch(groups, 2, width)
    return vote_batch(outputs, scheme.threshold, width)


def _count_failures(scheme: Scheme, q: float, seed: int, start: int, stop: int) -> int:
    golden = golden_codeword()
    reps = np.arange(start, stop, dtype=np.uint64)
    faulty = replication_uniforms(seed, reps, scheme.n_modules) < q
    outputs = np.where(faulty, np.uint64(0), np.uint64(golden.value))
    voted = vote_scheme_batch(scheme, outputs, golden.width)
    return int(np.count_nonzero(voted != np.uint64(golden.value)))


def monte_carlo_reliability(scheme: Scheme, q: float, replications: int, seed: int,
                            workers: int = 1, chunk: int = 50_000) -> ReliabilityEstimate:
    """Fraction of single-vote replications whose voted word differs from golden.

    Each module of each replication is independently blanked with probability
    ``q``; there is no repair.
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must be in [0, 1], got {q}")
    if replications < 1:
        raise ValueError("need at least one replication")
    bounds = [(s, min(s + chunk, replications)) for s in range(0, replications, chunk)]
    if workers > 1 and len(bounds) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_count_failures, scheme, q, seed, a, b) for a, b in bounds]
            failures = sum(f.result() for f in futures)
    else:
        failures = sum(_count_failures(scheme, q, seed, a, b) for a, b in bounds)
    p = failures / replications
    half = Z95 * math.sqrt(p * (1 - p) / replications)
    return ReliabilityEstimate(scheme.name, q, replications, failures, p, half,
                               exact_failure_probability(scheme, q))


# ---------------------------------------------------------------------------
# Calibration report

@dataclass(frozen=True)
class CalibrationRow:
    size_kb: float
    predicted_ms: float
    actual_ms: float
    residual_pct: float


def calibration_report(points, model: RecoveryModel) -> list[CalibrationRow]:
    return [CalibrationRow(*row) for row in calibration_residuals(points, model)]


# ---------------------------------------------------------------------------
# Reports

def _cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(round(value, 10))
    return str(value)


def emit_report(data, fmt: str = "csv") -> str:
    """Render rows (dataclass instances) or a Metrics record as CSV or JSON."""
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown report format {fmt!r}")
    if isinstance(data, Metrics):
        records = [data.to_dict()]
        single = True
    else:
        rows = list(data or [])
        if not rows:
            raise ValueError("nothing to report")
        records = [asdict(r) for r in rows]
        single = False
    if not records or not records[0]:
        raise ValueError("nothing to report")
    if fmt == "json":
        payload = records[0] if single else records
        return json.dumps(payload, indent=2, sort_keys=single) + "\n"
    columns = list(records[0])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for rec in records:
        writer.writerow([_cell(rec[c]) for c in columns])
    return buf.getvalue()


def _parse_cell(text: str, kind):
    if kind is bool or kind == "bool":
        if text not in ("true", "false"):
            raise ValueError(f"not a boolean: {text!r}")
        return text == "true"
    if kind is int or kind == "int":
        return int(text)
    if kind is float or kind == "float":
        return float(text)
    return text


def parse_report(text: str, row_type):
    """Parse CSV produced by :func:`emit_report` back into ``row_type`` rows."""
    reader = csv.DictReader(io.StringIO(text))
    types = {f.name: f.type for f in fields(row_type)}
    if reader.fieldnames != list(types):
        raise ValueError(f"unexpected columns {reader.fieldnames}")
    return [row_type(**{k: _parse_cell(v, types[k]) for k, v in rec.items()})
            for rec in reader]


def check_tolerance_agreement(schemes: Sequence[Scheme]) -> dict[str, tuple[int, int]]:
    """Map scheme name to (formula limit, exhaustively measured limit)."""
    return {s.name: (tolerance_limit(s), measured_tolerance(s)) for s in schemes}
