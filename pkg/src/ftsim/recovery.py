"""Fault semantics, module health states and the reconfiguration-port model.

Recovery latency is affine in the bitstream size and is calibrated by least
squares from measured (size, time) pairs. Recoveries are serialised through a
single configuration port.
"""

from __future__ import annotations

import csv
from decimal import ROUND_HALF_EVEN, Decimal
import enum
import io
from collections import deque
from dataclasses import dataclass, field
from os import PathLike
from typing import Iterable, Sequence

import numpy as np

from .core import Word

# Measured recovery times per module: (bitstream size in KB, time in ms).
TABLE2_POINTS: tuple[tuple[float, float], ...] = (
    (128.0, 224.93),
    (120.0, 209.66),
    (81.0, 141.59),
    (128.0, 225.00),
    (142.0, 261.57),
)
DEFAULT_BITSTREAM_KB: tuple[float, ...] = tuple(size for size, _ in TABLE2_POINTS)
PER_MODULE_WATTS = 0.010

TICKS_PER_MS = 100_000  # 10 ns clock


def ms_to_ticks(ms: float) -> int:
    """Convert milliseconds to 10 ns ticks, rounding to the nearest tick."""
    # go through repr so 141.59 ms is 14_159_000 ticks, not 14_158_999
    ticks = (Decimal(repr(float(ms))) * TICKS_PER_MS).to_integral_value(ROUND_HALF_EVEN)
    return int(ticks)


def ticks_to_ms(ticks: int) -> float:
    return ticks / TICKS_PER_MS


# ---------------------------------------------------------------------------
# Fault modes

@dataclass(frozen=True)
class Blank:
    """Module region reconfigured empty: drives all zeros."""

    def label(self) -> str:
        return "blank"


@dataclass(frozen=True)
class StuckAt:
    value: Word

    def label(self) -> str:
        return f"stuck-at:{self.value.value:#x}"


@dataclass(frozen=True)
class BitFlip:
    mask: Word

    def __post_init__(self):
        if self.mask.value == 0:
            raise ValueError("bit-flip mask must be non-zero")

    def label(self) -> str:
        return f"bitflip:{self.mask.value:#x}"


FaultMode = Blank | StuckAt | BitFlip


def apply_fault(mode: FaultMode, correct: Word) -> Word:
    if isinstance(mode, Blank):
        return Word(0, correct.width)
    if isinstance(mode, StuckAt):
        if mode.value.width != correct.width:
            raise ValueError(f"stuck-at width {mode.value.width} != {correct.width}")
        return mode.value
    if isinstance(mode, BitFlip):
        return correct ^ mode.mask
    raise TypeError(f"unknown fault mode {mode!r}")


# ---------------------------------------------------------------------------
# Module health

class Health(enum.Enum):
    HEALTHY = "healthy"
    FAULTY = "faulty"
    RECOVERING = "recovering"


@dataclass
class ModuleState:
    """Lifecycle of one redundant module: healthy -> faulty -> recovering -> healthy."""

    module_id: int
    bitstream_kb: float
    health: Health = Health.HEALTHY
    fault: FaultMode | None = None
    since: int | None = None  # tick the fault was injected
    until: int | None = None  # tick the running recovery finishes

    def __post_init__(self):
        if self.bitstream_kb <= 0:
            raise ValueError(f"module {self.module_id}: bitstream size must be positive")

    @property
    def healthy(self) -> bool:
        return self.health is Health.HEALTHY

    def inject(self, mode: FaultMode, now: int) -> None:
        if self.health is not Health.HEALTHY:
            raise RuntimeError(f"module {self.module_id} is {self.health.value}, cannot inject")
        self.health, self.fault, self.since = Health.FAULTY, mode, now

    def start_recovery(self, until: int) -> None:
        # a healthy module may be recovered after a misdiagnosis
        self.health, self.until = Health.RECOVERING, until
        self.fault = None

    def finish_recovery(self, now: int) -> None:
        if self.health is not Health.RECOVERING or self.until != now:
            raise RuntimeError(f"module {self.module_id}: recovery does not end at tick {now}")
        self.health, self.fault, self.since, self.until = Health.HEALTHY, None, None, None

    def output(self, correct: Word) -> Word:
        if self.health is Health.HEALTHY:
            return correct
        if self.health is Health.RECOVERING:
            # the region is being rewritten; it drives nothing useful until done
            return Word(0, correct.width)
        return apply_fault(self.fault, correct)


# ---------------------------------------------------------------------------
# Recovery latency and power

@dataclass(frozen=True)
class RecoveryModel:
    overhead_ms: float = 0.0
    ms_per_kb: float = 1.0
    per_module_watts: float = PER_MODULE_WATTS

    def __post_init__(self):
        if self.overhead_ms < 0:
            raise ValueError("overhead_ms must be non-negative")
        if self.ms_per_kb <= 0:
            raise ValueError("ms_per_kb must be positive")
        if self.per_module_watts <= 0:
            raise ValueError("per_module_watts must be positive")

    def duration(self, size_kb: float) -> float:
        return recovery_duration(size_kb, self)

    def to_dict(self) -> dict:
        return {"overhead_ms": self.overhead_ms, "ms_per_kb": self.ms_per_kb,
                "per_module_watts": self.per_module_watts}


def recovery_duration(size_kb: float, model: RecoveryModel) -> float:
    if not size_kb > 0:
        raise ValueError(f"bitstream size must be positive, got {size_kb}")
    return model.overhead_ms + model.ms_per_kb * size_kb


def calibrate_recovery_model(points: Iterable[tuple[float, float]],
                             per_module_watts: float = PER_MODULE_WATTS) -> RecoveryModel:
    """Least-squares fit of ``ms = a + b * size_kb`` subject to ``a >= 0``.

    The problem is convex, so when the unconstrained intercept comes out
    negative the constrained optimum lies on ``a = 0`` and reduces to a fit
    through the origin.
    """
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2 or len(np.unique(pts[:, 0])) < 2:
        raise ValueError("calibration needs at least two points with distinct sizes")
    x, y = pts[:, 0], pts[:, 1]
    if np.any(x <= 0):
        raise ValueError("bitstream sizes must be positive")
    design = np.column_stack([np.ones_like(x), x])
    (a, b), *_ = np.linalg.lstsq(design, y, rcond=None)
    if a < 0:
        a, b = 0.0, float(x @ y / (x @ x))
    a = max(float(a), 0.0)  # clamp -0.0 and rounding noise
    if b <= 0:
        raise ValueError(f"calibration produced a non-positive slope ({b:.4g})")
    return RecoveryModel(a, float(b), per_module_watts)


def calibration_residuals(points: Sequence[tuple[float, float]], model: RecoveryModel):
    """Rows of (size_kb, predicted_ms, actual_ms, residual_pct)."""
    rows = []
    for size, actual in points:
        predicted = recovery_duration(size, model)
        rows.append((size, predicted, actual, 100.0 * (predicted - actual) / actual))
    return rows


def read_points_csv(source: str | PathLike | io.TextIOBase) -> list[tuple[float, float]]:
    """Read ``size_kb,ms`` rows."""
    if isinstance(source, io.TextIOBase):
        return _parse_points(source)
    with open(source, newline="") as fh:
        return _parse_points(fh)


def _parse_points(fh) -> list[tuple[float, float]]:
    reader = csv.DictReader(fh)
    if reader.fieldnames is None or not {"size_kb", "ms"} <= set(reader.fieldnames):
        raise ValueError("calibration CSV needs a 'size_kb,ms' header")
    return [(float(row["size_kb"]), float(row["ms"])) for row in reader]


DEFAULT_MODEL = calibrate_recovery_model(TABLE2_POINTS)


def power_estimate(n_modules: int, per_module_watts: float = PER_MODULE_WATTS) -> float:
    if n_modules < 1:
        raise ValueError("need at least one module")
    if per_module_watts <= 0:
        raise ValueError("per-module power must be positive")
    return n_modules * per_module_watts


# ---------------------------------------------------------------------------
# Reconfiguration port

class PortResult(enum.Enum):
    STARTED = "started"
    QUEUED = "queued"
    DUPLICATE = "duplicate"


@dataclass
class Recovery:
    module_id: int
    start: int
    end: int

    @property
    def duration_ticks(self) -> int:
        return self.end - self.start


@dataclass
class ReconfigPort:
    """Single configuration port: one recovery at a time, FIFO behind it."""

    sizes_kb: Sequence[float]
    model: RecoveryModel = DEFAULT_MODEL
    current: Recovery | None = None
    queue: deque = field(default_factory=deque)

    @property
    def busy_until(self) -> int | None:
        return self.current.end if self.current else None

    @property
    def idle(self) -> bool:
        return self.current is None

    def duration_ticks(self, module_id: int) -> int:
        return ms_to_ticks(recovery_duration(self.sizes_kb[module_id - 1], self.model))

    def holds(self, module_id: int) -> bool:
        """True if the module is recovering or waiting for the port."""
        return (self.current is not None and self.current.module_id == module_id) \
            or module_id in self.queue

    def enqueue(self, module_id: int, now: int) -> PortResult:
        if self.holds(module_id):
            return PortResult.DUPLICATE
        if self.current is None:
            self.current = Recovery(module_id, now, now + self.duration_ticks(module_id))
            return PortResult.STARTED
        self.queue.append(module_id)
        return PortResult.QUEUED

    def complete(self, now: int) -> tuple[Recovery, Recovery | None]:
        """Finish the running recovery; start the next queued one at ``now``."""
        done = self.current
        if done is None or done.end != now:
            raise RuntimeError(f"no recovery finishes at tick {now}")
        self.current = None
        if self.queue:
            nxt = self.queue.popleft()
            self.current = Recovery(nxt, now, now + self.duration_ticks(nxt))
        return done, self.current
