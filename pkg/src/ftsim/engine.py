"""Deterministic discrete-event simulation of a voted redundant system.

Every module runs the Hamming payload on the workload nibble; its output word
is the 8-bit codeword followed by the 4-bit re-decoded nibble. A voter and an
error detector watch the module outputs, a polling loop reads the latched
error register and hands flagged modules to the reconfiguration port, and a
periodic injector blanks (or otherwise corrupts) randomly chosen modules.

Time is kept in integer 10 ns ticks. Events that share a tick are ordered
Workload < Vote < Detect (poll) < Inject < RecoverEnd, then by module id.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import logging
from dataclasses import dataclass, field, fields
from typing import Iterable

import numpy as np

from .core import (Flat, Scheme, Word, detect_errors, format_bits,
                   hamming_decode, hamming_encode, parse_scheme, tolerance_limit,
                   vote_scheme)
from .recovery import (DEFAULT_BITSTREAM_KB, DEFAULT_MODEL, Blank, BitFlip, FaultMode,
                       Health, ModuleState, PortResult, ReconfigPort, RecoveryModel,
                       StuckAt, TICKS_PER_MS, ms_to_ticks)

log = logging.getLogger(__name__)

LOG_REVISION = "ftsim-events/1"
PRNG_ALGORITHM = "numpy.random.PCG64"
PAYLOAD_WIDTH = 12
DEFAULT_DATA = 0b1010
STAGGERED = "staggered-3"
STAGGER_MODULES = (3, 4, 5)
STAGGER_CAP = 2

# same-tick ordering
WORKLOAD, VOTE, POLL, INJECT, RECOVER_END = range(5)


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Configuration

@dataclass(frozen=True)
class SimConfig:
    scheme: Scheme = Flat(5)
    word_width: int = PAYLOAD_WIDTH
    workload_period_ms: float = 100.0
    inject_period_ms: float = 500.0
    inject_multiplicity: int | str = 1
    fault_mode: str = "blank"
    detector_poll_period_ms: float = 10.0
    duration_ms: float = 3_600_000.0
    seed: int | None = None
    bitstream_kb: tuple[float, ...] | None = None
    recovery_model: RecoveryModel = DEFAULT_MODEL
    workload_data: str = "1010"
    drain_ms: float = 10_000.0

    def validate(self) -> None:
        if self.seed is None:
            raise ConfigError("a seed is required")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.word_width != PAYLOAD_WIDTH:
            raise ConfigError(f"word_width must be {PAYLOAD_WIDTH} (8-bit codeword + 4-bit nibble)")
        for name in ("workload_period_ms", "inject_period_ms", "detector_poll_period_ms",
                     "duration_ms"):
            value = getattr(self, name)
            if not value > 0 or ms_to_ticks(value) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.drain_ms < 0:
            raise ConfigError("drain_ms must be non-negative")
        if self.duration_ms < self.workload_period_ms:
            raise ConfigError("duration must cover at least one workload period")
        n = self.scheme.n_modules
        m = self.inject_multiplicity
        if m == STAGGERED:
            if n < max(STAGGER_MODULES):
                raise ConfigError(f"{STAGGERED} needs at least {max(STAGGER_MODULES)} modules")
        elif not isinstance(m, int) or isinstance(m, bool) or not 1 <= m <= n:
            raise ConfigError(f"inject_multiplicity must be 1..{n} or {STAGGERED!r}")
        if len(self.sizes_kb()) != n or any(s <= 0 for s in self.sizes_kb()):
            raise ConfigError(f"need {n} positive bitstream sizes")
        if self.workload_data not in ("random",):
            try:
                _parse_nibble(self.workload_data)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        try:
            parse_fault_spec(self.fault_mode, self.word_width)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def sizes_kb(self) -> tuple[float, ...]:
        if self.bitstream_kb is not None:
            return tuple(float(s) for s in self.bitstream_kb)
        n = self.scheme.n_modules
        return tuple(DEFAULT_BITSTREAM_KB[i % len(DEFAULT_BITSTREAM_KB)] for i in range(n))

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["scheme"] = self.scheme.name
        d["bitstream_kb"] = list(self.sizes_kb())
        d["recovery_model"] = self.recovery_model.to_dict()
        return d

    @classmethod
    def from_dict(cls, raw: dict) -> "SimConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        kw = dict(raw)
        try:
            if "scheme" in kw:
                kw["scheme"] = parse_scheme(str(kw["scheme"]))
            if kw.get("bitstream_kb") is not None:
                kw["bitstream_kb"] = tuple(float(s) for s in kw["bitstream_kb"])
            if "recovery_model" in kw:
                kw["recovery_model"] = RecoveryModel(**kw["recovery_model"])
            for name in ("workload_period_ms", "inject_period_ms", "detector_poll_period_ms",
                         "duration_ms", "drain_ms"):
                if name in kw:
                    kw[name] = float(kw[name])
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        return cls(**kw)

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def _parse_nibble(text: str) -> int:
    text = str(text).strip()
    if len(text) != 4 or set(text) - {"0", "1"}:
        raise ValueError(f"workload_data must be a 4-bit string or 'random', got {text!r}")
    return int(text, 2)


def parse_fault_spec(spec: str, width: int):
    """Return a callable ``rng -> FaultMode`` for a fault-mode spec string.

    Accepted: ``blank``, ``stuck-at:<hex>``, ``bitflip:<hex>``, ``random-bitflip``.
    """
    kind, _, arg = spec.strip().lower().partition(":")
    if kind == "blank" and not arg:
        mode = Blank()
        return lambda rng: mode
    if kind == "random-bitflip" and not arg:
        return lambda rng: BitFlip(Word(1 << int(rng.integers(width)), width))
    if kind in ("stuck-at", "bitflip") and arg:
        value = int(arg, 16)
        if not 0 <= value < (1 << width):
            raise ValueError(f"fault value {arg} does not fit in {width} bits")
        mode = StuckAt(Word(value, width)) if kind == "stuck-at" else BitFlip(Word(value, width))
        return lambda rng: mode
    raise ValueError(f"unknown fault mode {spec!r}")


# ---------------------------------------------------------------------------
# Payload

def payload_output(data: int) -> Word:
    """Healthy module output: codeword in the top 8 bits, re-decoded nibble below."""
    code = hamming_encode(data)
    return Word((code << 4) | hamming_decode(code).data, PAYLOAD_WIDTH)


def split_output(word: Word) -> tuple[str, str]:
    """(decoded nibble, encoded codeword) as bit strings."""
    return format_bits(word.value & 0xF, 4), format_bits(word.value >> 4, 8)


# ---------------------------------------------------------------------------
# Records

EVENT_KINDS = ("Inject", "Workload", "Vote", "Detect", "RecoverStart", "RecoverEnd",
               "SystemError", "Warning")


@dataclass(frozen=True)
class EventRecord:
    time: int
    kind: str
    module: int | None = None
    decoded: str | None = None
    encoded: str | None = None
    dpr_speed_ms: float | None = None
    detail: str | None = None

    @property
    def time_ms(self) -> float:
        return self.time / TICKS_PER_MS

    def to_json(self) -> str:
        return json.dumps({"time": self.time, "kind": self.kind, "module": self.module,
                           "decoded": self.decoded, "encoded": self.encoded,
                           "dpr_speed_ms": self.dpr_speed_ms, "detail": self.detail},
                          separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "EventRecord":
        return cls(**{f.name: d.get(f.name) for f in fields(cls)})


@dataclass
class Metrics:
    injections: int = 0
    detections: int = 0
    latent_faults: int = 0
    pending_faults: int = 0
    recoveries: int = 0
    spurious_recoveries: int = 0
    misdiagnoses: int = 0
    votes: int = 0
    incorrect_votes: int = 0
    tolerance_violations: int = 0
    max_concurrent_faulty: int = 0
    max_detection_latency_ms: float = 0.0
    availability: float = 1.0

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class _Fault:
    module: int
    injected: int
    detected: int | None = None
    masked_votes: int = 0


@dataclass
class SimResult:
    metrics: Metrics
    events: list[EventRecord]
    header: dict

    def __iter__(self):
        # allows ``metrics, events = run_simulation(cfg)``
        return iter((self.metrics, self.events))

    def event_lines(self) -> Iterable[str]:
        yield json.dumps(self.header, sort_keys=True, separators=(",", ":"))
        for ev in self.events:
            yield ev.to_json()

    def write_events(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            for line in self.event_lines():
                fh.write(line + "\n")

    def write_metrics(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.metrics.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


# ---------------------------------------------------------------------------
# Simulation

class Simulation:
    """One replication. Owns all mutable state; not shared between threads."""

    def __init__(self, config: SimConfig):
        config.validate()
        self.cfg = config
        self.n = config.scheme.n_modules
        self.limit = tolerance_limit(config.scheme)
        self.rng = np.random.Generator(np.random.PCG64(config.seed))
        self.make_fault = parse_fault_spec(config.fault_mode, config.word_width)
        sizes = config.sizes_kb()
        self.modules = [ModuleState(i + 1, sizes[i]) for i in range(self.n)]
        self.port = ReconfigPort(sizes, config.recovery_model)
        self.metrics = Metrics()
        self.events: list[EventRecord] = []
        self.faults: list[_Fault] = []
        self.open_fault: dict[int, _Fault] = {}
        self.recovering_fault: dict[int, _Fault | None] = {}
        self.register = 0  # latched error flags, module 1 in the LSB
        self.outputs: list[Word] = []
        self.golden: Word | None = None
        self.queue: list = []
        self.seq = 0
        self.end = ms_to_ticks(config.duration_ms)
        self.hard_stop = self.end + ms_to_ticks(config.drain_ms)
        self.periods = {
            WORKLOAD: ms_to_ticks(config.workload_period_ms),
            POLL: ms_to_ticks(config.detector_poll_period_ms),
            INJECT: ms_to_ticks(config.inject_period_ms),
        }

    # -- event queue -------------------------------------------------------

    def _push(self, tick: int, prio: int, module: int = 0) -> None:
        self.seq += 1
        heapq.heappush(self.queue, (tick, prio, module, self.seq))

    def _emit(self, now: int, kind: str, **kw) -> None:
        ev = EventRecord(now, kind, **kw)
        self.events.append(ev)
        if log.isEnabledFor(logging.DEBUG):
            log.debug("%s", ev.to_json())

    def _draining_done(self, now: int) -> bool:
        return now > self.end and self.port.idle and all(m.healthy for m in self.modules)

    def run(self) -> SimResult:
        for prio in (WORKLOAD, POLL, INJECT):
            self._push(self.periods[prio], prio)
        while self.queue:
            now, prio, module, _ = heapq.heappop(self.queue)
            if now > self.hard_stop or self._draining_done(now):
                break
            if prio == WORKLOAD:
                self._workload(now)
                self._push(now, VOTE)
                self._push(now + self.periods[WORKLOAD], WORKLOAD)
            elif prio == VOTE:
                self._vote(now)
            elif prio == POLL:
                self._poll(now)
                self._push(now + self.periods[POLL], POLL)
            elif prio == INJECT:
                if now <= self.end:
                    self._inject(now)
                    self._push(now + self.periods[INJECT], INJECT)
            elif prio == RECOVER_END:
                self._recover_end(now, module)
        return self._finish()

    # -- handlers ----------------------------------------------------------

    def _workload(self, now: int) -> None:
        if self.cfg.workload_data == "random":
            data = int(self.rng.integers(16))
        else:
            data = _parse_nibble(self.cfg.workload_data)
        self.golden = payload_output(data)  # shadow evaluation, never injected
        self.outputs = [m.output(self.golden) for m in self.modules]
        self._emit(now, "Workload", decoded=format_bits(data, 4))

    def _vote(self, now: int) -> None:
        voted = vote_scheme(self.cfg.scheme, self.outputs)
        flags = detect_errors(voted, self.outputs)
        self.register = flags.to_int()
        m = self.metrics
        m.votes += 1
        nonhealthy = sum(not mod.healthy for mod in self.modules)
        m.max_concurrent_faulty = max(m.max_concurrent_faulty, nonhealthy)
        for mid, fault in self.open_fault.items():
            if fault.detected is None and self.outputs[mid - 1] == voted:
                fault.masked_votes += 1
        decoded, encoded = split_output(voted)
        self._emit(now, "Vote", decoded=decoded, encoded=encoded)
        if voted != self.golden:
            m.incorrect_votes += 1
            if nonhealthy <= self.limit:
                m.tolerance_violations += 1
            self._emit(now, "SystemError", decoded=decoded, encoded=encoded,
                       detail=f"{nonhealthy} modules not healthy")

    def _poll(self, now: int) -> None:
        if not self.register:
            return
        for i in range(self.n):
            mid = i + 1
            if not (self.register >> i) & 1 or self.port.holds(mid):
                continue
            self._emit(now, "Detect", module=mid)
            fault = self.open_fault.get(mid)
            if fault is not None and fault.detected is None:
                fault.detected = now
                self.metrics.detections += 1
            elif self.modules[i].healthy:
                self.metrics.misdiagnoses += 1
            result = self.port.enqueue(mid, now)
            if result is PortResult.STARTED:
                self._start_recovery(now, mid)
            elif result is PortResult.DUPLICATE:
                self._emit(now, "Warning", module=mid, detail="duplicate recovery request")

    def _start_recovery(self, now: int, mid: int) -> None:
        rec = self.port.current
        self.recovering_fault[mid] = self.open_fault.pop(mid, None)
        self.modules[mid - 1].start_recovery(rec.end)
        self._emit(now, "RecoverStart", module=mid)
        self._push(rec.end, RECOVER_END, mid)

    def _recover_end(self, now: int, mid: int) -> None:
        done, nxt = self.port.complete(now)
        assert done.module_id == mid
        self.modules[mid - 1].finish_recovery(now)
        self.register &= ~(1 << (mid - 1))
        if self.recovering_fault.pop(mid, None) is not None:
            self.metrics.recoveries += 1
        else:
            self.metrics.spurious_recoveries += 1
        self._emit(now, "RecoverEnd", module=mid, dpr_speed_ms=done.duration_ticks / TICKS_PER_MS)
        if nxt is not None:
            self._start_recovery(now, nxt.module_id)

    def _candidates(self, pool: Iterable[int]) -> list[int]:
        return [mid for mid in pool
                if self.modules[mid - 1].healthy and not self.port.holds(mid)]

    def _inject(self, now: int) -> None:
        mult = self.cfg.inject_multiplicity
        if mult == STAGGERED:
            busy = sum(not m.healthy or self.port.holds(m.module_id) for m in self.modules)
            want = max(0, STAGGER_CAP - busy)
            pool = self._candidates(STAGGER_MODULES)
        else:
            want = mult
            pool = self._candidates(range(1, self.n + 1))
        k = min(want, len(pool))
        if k < want or k == 0:
            self._emit(now, "Warning", detail=f"injected {k} of {mult} requested faults")
        if k == 0:
            return
        targets = sorted(int(t) for t in self.rng.choice(pool, size=k, replace=False))
        for mid in targets:
            mode: FaultMode = self.make_fault(self.rng)
            self.modules[mid - 1].inject(mode, now)
            fault = _Fault(mid, now)
            self.faults.append(fault)
            self.open_fault[mid] = fault
            self.metrics.injections += 1
            self._emit(now, "Inject", module=mid, detail=mode.label())

    def _finish(self) -> SimResult:
        m = self.metrics
        for fault in self.faults:
            if fault.detected is None:
                if fault.masked_votes:
                    m.latent_faults += 1
                else:
                    m.pending_faults += 1
        lat = [f.detected - f.injected for f in self.faults if f.detected is not None]
        m.max_detection_latency_ms = max(lat, default=0) / TICKS_PER_MS
        m.availability = (m.votes - m.incorrect_votes) / m.votes if m.votes else 1.0
        header = {
            "kind": "header",
            "revision": LOG_REVISION,
            "config_hash": self.cfg.config_hash(),
            "seed": self.cfg.seed,
            "prng": PRNG_ALGORITHM,
            "tick_ns": 10,
            "config": self.cfg.to_dict(),
        }
        return SimResult(m, self.events, header)


def run_simulation(config: SimConfig) -> SimResult:
    return Simulation(config).run()


def detection_latency(events: Iterable[EventRecord]) -> list[float]:
    """Inject-to-Detect latency in ms for every injected fault that was detected.

    A module's fault is closed by its Detect; injections never hit a module
    whose previous fault is still open.
    """
    open_inject: dict[int, int] = {}
    latencies = []
    for ev in events:
        if ev.kind == "Inject":
            open_inject[ev.module] = ev.time
        elif ev.kind == "Detect" and ev.module in open_inject:
            latencies.append((ev.time - open_inject.pop(ev.module)) / TICKS_PER_MS)
        elif ev.kind == "RecoverEnd":
            open_inject.pop(ev.module, None)
    return latencies


def read_event_log(path) -> tuple[dict, list[EventRecord]]:
    with open(path) as fh:
        header = json.loads(fh.readline())
        events = [EventRecord.from_dict(json.loads(line)) for line in fh if line.strip()]
    return header, events
