"""Combinational logic of an N-modular-redundant system.

Majority voting (counting voter, the literal five-input sum-of-products, and
a 3x3 hierarchical voter), per-module error detection, the extended
Hamming(8,4) payload carried by each module, and scheme tolerance limits.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

__all__ = [
    "Word", "Flat", "Hierarchical3x3", "Scheme", "DecodeStatus", "DecodeResult",
    "ErrorVector", "hamming_encode", "hamming_decode", "flip_bit", "vote",
    "vote_fmr_formula", "vote_hierarchical", "vote_scheme", "detect_errors",
    "tolerance_limit", "parse_scheme", "format_bits", "failure_witness", "placements",
]

MAX_WIDTH = 64


@dataclass(frozen=True)
class Word:
    """Fixed-width bit vector. ``value`` is unsigned, bit 0 is the LSB."""

    value: int
    width: int = 8

    def __post_init__(self):
        if not 1 <= self.width <= MAX_WIDTH:
            raise ValueError(f"word width must be in 1..{MAX_WIDTH}, got {self.width}")
        if not 0 <= self.value < (1 << self.width):
            raise ValueError(f"value {self.value:#x} does not fit in {self.width} bits")

    @classmethod
    def from_bits(cls, bits: str) -> "Word":
        """Parse a left-to-right (MSB first) bit string such as ``"1010"``."""
        bits = bits.strip().replace("_", "")
        if not bits or set(bits) - {"0", "1"}:
            raise ValueError(f"not a bit string: {bits!r}")
        return cls(int(bits, 2), len(bits))

    @classmethod
    def from_hex(cls, text: str) -> "Word":
        digits = text.lower().removeprefix("0x")
        if not digits:
            raise ValueError("empty hex word")
        return cls(int(digits, 16), 4 * len(digits))

    @property
    def mask(self) -> int:
        return (1 << self.width) - 1

    def bit(self, j: int) -> int:
        return (self.value >> j) & 1

    def __int__(self):
        return self.value

    def __xor__(self, other: "Word") -> "Word":
        _check_widths([self, other])
        return Word(self.value ^ other.value, self.width)

    def __str__(self):
        return format_bits(self.value, self.width)


def format_bits(value: int, width: int) -> str:
    return format(value, f"0{width}b")


def _check_widths(words: Sequence[Word]) -> int:
    if not words:
        raise ValueError("at least one word is required")
    width = words[0].width
    for w in words[1:]:
        if w.width != width:
            raise ValueError(f"width mismatch: {w.width} != {width}")
    return width


# ---------------------------------------------------------------------------
# Schemes

@dataclass(frozen=True)
class Flat:
    """``n`` modules voted by a single k-of-n majority, k = (n + 1) / 2."""

    n: int

    def __post_init__(self):
        if self.n < 3 or self.n % 2 == 0:
            raise ValueError(f"flat scheme needs an odd module count >= 3, got {self.n}")

    @property
    def n_modules(self) -> int:
        return self.n

    @property
    def threshold(self) -> int:
        return (self.n + 1) // 2

    @property
    def name(self) -> str:
        return {3: "tmr", 5: "fmr"}.get(self.n, f"flat{self.n}")


@dataclass(frozen=True)
class Hierarchical3x3:
    """Nine modules in three TMR groups; the group results are voted 2-of-3."""

    n_modules = 9
    name = "nmr9"


Scheme = Flat | Hierarchical3x3

SCHEME_ALIASES = {"tmr": Flat(3), "fmr": Flat(5), "nmr9": Hierarchical3x3()}


def parse_scheme(text: str) -> Scheme:
    """``tmr``, ``fmr``, ``nmr9`` or ``flat<N>`` / ``flat:<N>`` for odd N."""
    key = text.strip().lower()
    if key in SCHEME_ALIASES:
        return SCHEME_ALIASES[key]
    if key.startswith("flat"):
        try:
            return Flat(int(key[4:].lstrip(":")))
        except ValueError as exc:
            raise ValueError(f"bad scheme {text!r}: {exc}") from None
    raise ValueError(f"unknown scheme {text!r}")


def tolerance_limit(scheme: Scheme) -> int:
    """Worst-case number of simultaneously faulty modules the scheme masks."""
    if isinstance(scheme, Flat):
        return (scheme.n - 1) // 2
    if isinstance(scheme, Hierarchical3x3):
        return 3
    raise TypeError(f"not a scheme: {scheme!r}")


# ---------------------------------------------------------------------------
# Voting

def vote(outputs: Sequence[Word], k: int) -> Word:
    """Per-bit threshold vote: bit j is set iff at least ``k`` inputs set it."""
    width = _check_widths(outputs)
    if not 1 <= k <= len(outputs):
        raise ValueError(f"threshold {k} outside 1..{len(outputs)}")
    result = 0
    for j in range(width):
        ones = sum((w.value >> j) & 1 for w in outputs)
        if ones >= k:
            result |= 1 << j
    return Word(result, width)


def vote_fmr_formula(m1: Word, m2: Word, m3: Word, m4: Word, m5: Word) -> Word:
    """Five-input majority written out as the OR of all ten 3-input ANDs."""
    width = _check_widths([m1, m2, m3, m4, m5])
    a, b, c, d, e = (m.value for m in (m1, m2, m3, m4, m5))
    f = ((a & b & c) | (a & b & d) | (a & b & e) | (a & c & d) | (a & c & e)
         | (a & d & e) | (b & c & d) | (b & c & e) | (b & d & e) | (c & d & e))
    return Word(f, width)


def vote_hierarchical(modules: Sequence[Word]) -> Word:
    """2-of-3 vote inside each group of three, then 2-of-3 over the groups."""
    if len(modules) != 9:
        raise ValueError(f"hierarchical voter needs 9 modules, got {len(modules)}")
    _check_widths(modules)
    groups = [vote(modules[i:i + 3], 2) for i in range(0, 9, 3)]
    return vote(groups, 2)


def vote_scheme(scheme: Scheme, outputs: Sequence[Word]) -> Word:
    if len(outputs) != scheme.n_modules:
        raise ValueError(f"{scheme.name} expects {scheme.n_modules} outputs, got {len(outputs)}")
    if isinstance(scheme, Hierarchical3x3):
        return vote_hierarchical(outputs)
    return vote(outputs, scheme.threshold)


# ---------------------------------------------------------------------------
# Error detection

@dataclass(frozen=True)
class ErrorVector:
    """Per-module mismatch flags; ``flags[i]`` belongs to module ``i + 1``."""

    flags: tuple[bool, ...]

    def __len__(self):
        return len(self.flags)

    def __iter__(self):
        return iter(self.flags)

    def __getitem__(self, i):
        return self.flags[i]

    def to_int(self) -> int:
        """Pack with module 1 in the least significant bit."""
        return sum(1 << i for i, f in enumerate(self.flags) if f)

    @classmethod
    def from_int(cls, value: int, n: int) -> "ErrorVector":
        return cls(tuple(bool((value >> i) & 1) for i in range(n)))

    def modules(self) -> list[int]:
        """1-based ids of flagged modules, ascending."""
        return [i + 1 for i, f in enumerate(self.flags) if f]

    def any(self) -> bool:
        return any(self.flags)


def detect_errors(voted: Word, outputs: Sequence[Word]) -> ErrorVector:
    _check_widths([voted, *outputs])
    return ErrorVector(tuple(w.value != voted.value for w in outputs))


# ---------------------------------------------------------------------------
# Extended Hamming(8,4)
#
# Codeword bits left to right: [p0, p1, p2, m1, p3, m2, m3, m4]. Position j
# counts from the left, so position j is integer bit (7 - j). Positions 1..7
# are the classic Hamming(7,4) positions; p0 is overall even parity. Data
# bits b0..b3 (LSB first) map onto m1..m4.

_DATA_POSITIONS = (3, 5, 6, 7)


def _get(code: int, pos: int) -> int:
    return (code >> (7 - pos)) & 1


def flip_bit(code: int, pos: int) -> int:
    """Flip codeword position ``pos`` (0 = leftmost, p0)."""
    if not 0 <= pos < 8:
        raise ValueError(f"codeword position {pos} outside 0..7")
    return code ^ (1 << (7 - pos))


def hamming_encode(data: int) -> int:
    if not 0 <= data < 16:
        raise ValueError(f"data nibble out of range: {data}")
    m1, m2, m3, m4 = ((data >> i) & 1 for i in range(4))
    p1 = m1 ^ m2 ^ m4
    p2 = m1 ^ m3 ^ m4
    p3 = m2 ^ m3 ^ m4
    p0 = p1 ^ p2 ^ m1 ^ p3 ^ m2 ^ m3 ^ m4
    code = 0
    for bit in (p0, p1, p2, m1, p3, m2, m3, m4):
        code = (code << 1) | bit
    return code


class DecodeStatus(enum.Enum):
    NO_ERROR = "no-error"
    CORRECTED_SINGLE = "corrected-single"
    DETECTED_DOUBLE = "detected-double"


@dataclass(frozen=True)
class DecodeResult:
    data: int
    status: DecodeStatus
    position: int | None = None

    @property
    def trusted(self) -> bool:
        return self.status is not DecodeStatus.DETECTED_DOUBLE


def _extract(code: int) -> int:
    return sum(_get(code, pos) << i for i, pos in enumerate(_DATA_POSITIONS))


def hamming_decode(code: int) -> DecodeResult:
    """SECDED decode. A double error is reported in the status, never raised.

    On ``DETECTED_DOUBLE`` the returned data is the uncorrected message field
    and ``trusted`` is False.
    """
    if not 0 <= code < 256:
        raise ValueError(f"codeword out of range: {code}")
    syndrome = 0
    for pos in range(1, 8):
        if _get(code, pos):
            syndrome ^= pos
    parity = bin(code).count("1") & 1
    if syndrome == 0 and parity == 0:
        return DecodeResult(_extract(code), DecodeStatus.NO_ERROR)
    if parity == 1:
        # odd weight: single error, at p0 when the syndrome is clean
        fixed = flip_bit(code, syndrome)
        return DecodeResult(_extract(fixed), DecodeStatus.CORRECTED_SINGLE, syndrome)
    return DecodeResult(_extract(code), DecodeStatus.DETECTED_DOUBLE)


def failure_witness(scheme: Flat, golden: Word) -> list[Word]:
    """Outputs with one more agreeing Blank module than ``scheme`` tolerates."""
    if golden.value == 0:
        raise ValueError("a blank fault cannot be observed against an all-zero golden word")
    n_bad = tolerance_limit(scheme) + 1
    zero = Word(0, golden.width)
    return [zero] * n_bad + [golden] * (scheme.n - n_bad)


def placements(n_modules: int, n_faulty: int):
    """All ways of choosing ``n_faulty`` module indices (0-based)."""
    return combinations(range(n_modules), n_faulty)
