"""Bit-exact codec for the unsigned 7-bit hardware floating-point formats.

Two formats share the 7-bit code width: E2M5 (2 exponent bits, 5 mantissa
bits) and E3M4.  A code decodes to ``(1 + m / 2^M) * 2^e`` with an implicit
leading one and zero exponent bias, so the non-zero range is [1 + 2^-M,
(2 - 2^-M) * 2^(2^E - 1)].  The all-zeros code is reserved for an exact 0
(flush-to-zero; the format has no subnormals).  Signs are carried out of
band as a separate bit array; the 7-bit code itself is unsigned.

Serialized codes occupy the low 7 bits of a byte, exponent in the high
bits: ``[e..e m..m]``, e.g. E2M5 exponent 2 / mantissa 30 prints "1011110".
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ContractError

__all__ = [
    "FpFormat",
    "FpCode",
    "QuantScale",
    "EncodeResult",
    "E2M5",
    "E3M4",
    "decode",
    "encode",
    "decode_bits",
    "encode_values",
    "all_values",
    "quantize_tensor",
    "dequantize_tensor",
    "int8_quantize",
    "int8_dequantize",
]

CODE_BITS = 7


@dataclass(frozen=True)
class FpFormat:
    """Descriptor of one 7-bit exponent/mantissa split."""

    exponent_bits: int
    mantissa_bits: int

    def __post_init__(self):
        if self.exponent_bits + self.mantissa_bits != CODE_BITS:
            raise ContractError("exponent and mantissa bits must total 7")
        if self.exponent_bits not in (2, 3):
            raise ContractError("exponent width must be 2 or 3 bits")

    @property
    def name(self) -> str:
        return f"E{self.exponent_bits}M{self.mantissa_bits}"

    @property
    def exp_max(self) -> int:
        return (1 << self.exponent_bits) - 1

    @property
    def mant_levels(self) -> int:
        return 1 << self.mantissa_bits

    @property
    def max_value(self) -> float:
        """Largest decodable value, (2 - 2^-M) * 2^exp_max."""
        return (2.0 - 1.0 / self.mant_levels) * 2.0**self.exp_max

    @property
    def min_nonzero(self) -> float:
        """Smallest non-zero decodable value, 1 + 2^-M."""
        return 1.0 + 1.0 / self.mant_levels

    @property
    def code_count(self) -> int:
        return 1 << CODE_BITS


E2M5 = FpFormat(2, 5)
E3M4 = FpFormat(3, 4)


@dataclass(frozen=True)
class FpCode:
    """One 7-bit hardware code: unsigned exponent and mantissa fields."""

    exponent: int
    mantissa: int
    format: FpFormat = E2M5

    def __post_init__(self):
        if not 0 <= self.exponent <= self.format.exp_max:
            raise ContractError(f"exponent {self.exponent} out of range for {self.format.name}")
        if not 0 <= self.mantissa < self.format.mant_levels:
            raise ContractError(f"mantissa {self.mantissa} out of range for {self.format.name}")

    @property
    def is_zero(self) -> bool:
        return self.exponent == 0 and self.mantissa == 0

    def to_bits(self) -> int:
        return (self.exponent << self.format.mantissa_bits) | self.mantissa

    @classmethod
    def from_bits(cls, bits: int, fmt: FpFormat = E2M5) -> "FpCode":
        if not 0 <= bits < (1 << CODE_BITS):
            raise ContractError(f"code bits {bits} do not fit in 7 bits")
        return cls(bits >> fmt.mantissa_bits, bits & (fmt.mant_levels - 1), fmt)

    def bit_string(self) -> str:
        return format(self.to_bits(), f"0{CODE_BITS}b")

    @classmethod
    def from_bit_string(cls, s: str, fmt: FpFormat = E2M5) -> "FpCode":
        if len(s) != CODE_BITS or set(s) - {"0", "1"}:
            raise ContractError(f"not a 7-bit code string: {s!r}")
        return cls.from_bits(int(s, 2), fmt)


@dataclass(frozen=True)
class QuantScale:
    """Multiplier mapping real tensor values into the decodable range."""

    scale: float

    def __post_init__(self):
        if not self.scale > 0:
            raise ContractError("quantization scale must be positive")


class EncodeResult(NamedTuple):
    code: FpCode
    underflow: bool
    overflow: bool


def decode(code: FpCode) -> float:
    """Decoded value of a code: 0 for the all-zeros code, else (1+m/2^M)*2^e."""
    if code.is_zero:
        return 0.0
    fmt = code.format
    return (1.0 + code.mantissa / fmt.mant_levels) * 2.0**code.exponent


def all_values(fmt: FpFormat) -> np.ndarray:
    """All 128 decoded values in code-bit order (index = bit pattern)."""
    e = np.arange(fmt.code_count) >> fmt.mantissa_bits
    m = np.arange(fmt.code_count) & (fmt.mant_levels - 1)
    vals = (1.0 + m / fmt.mant_levels) * np.exp2(e)
    vals[0] = 0.0
    return vals


def encode(value: float, fmt: FpFormat = E2M5, mode: str = "nearest") -> EncodeResult:
    """Encode a non-negative real to the closest code under the given mode.

    ``nearest`` picks the decodable value (including 0) with minimum
    distance, ties toward the smaller code; mantissa overflow carries into
    the exponent.  ``ceiling`` mirrors the ADC counter: values below 1 flush
    to the zero code, otherwise the smallest code whose value is >= the
    input is returned.

    Values that flush to zero set the underflow flag; values above the
    format maximum clamp to the top code and set the overflow flag.
    """
    if value < 0 or not np.isfinite(value):
        raise ContractError(f"encode requires a finite non-negative value, got {value}")
    if mode not in ("nearest", "ceiling"):
        raise ContractError(f"unknown rounding mode {mode!r}")
    bits, under, over = encode_values(np.array([value]), fmt, mode)
    return EncodeResult(FpCode.from_bits(int(bits[0]), fmt), bool(under[0]), bool(over[0]))


def encode_values(values: np.ndarray, fmt: FpFormat = E2M5, mode: str = "nearest"):
    """Vectorized encode of non-negative values.

    Returns (code_bits uint8, underflow mask, overflow mask).
    """
    x = np.asarray(values, dtype=float)
    if x.size and (np.any(x < 0) or not np.all(np.isfinite(x))):
        raise ContractError("encode requires finite non-negative values")

    overflow = x > fmt.max_value
    xc = np.minimum(x, fmt.max_value)

    # Exponent of the surrounding binade, clamped to the format range
    # (frexp is exact, unlike log2 at binade edges).
    e = np.frexp(xc)[1] - 1
    e = np.clip(e, 0, fmt.exp_max)
    frac = xc / np.exp2(e) - 1.0  # in [-1, 1)

    if mode == "nearest":
        m = np.rint(frac * fmt.mant_levels).astype(int)
    else:
        m = np.ceil(frac * fmt.mant_levels).astype(int)
    m = np.maximum(m, 0)
    # Mantissa overflow carries into the exponent (cannot exceed exp_max
    # because overflow was clamped above).
    carry = m >= fmt.mant_levels
    e = e + carry
    m = np.where(carry, 0, m)

    bits = ((e << fmt.mantissa_bits) | m).astype(np.uint8)

    if mode == "nearest":
        # The (0,0) slot decodes to 0, not 1: values landing there must be
        # re-judged against the nearest non-zero code, 1 + 2^-M.
        contested = (bits == 0) & (x > 0)
        round_up = contested & (fmt.min_nonzero - x < x)
        bits = np.where(round_up, 1, bits).astype(np.uint8)
    else:
        # Ceiling mirrors the converter: anything below 1 is not read out.
        flush = x < 1.0
        bits = np.where(flush, 0, bits).astype(np.uint8)

    underflow = (bits == 0) & (x > 0)
    return bits, underflow, overflow


def decode_bits(bits: np.ndarray, fmt: FpFormat = E2M5) -> np.ndarray:
    """Vectorized decode of 7-bit code patterns."""
    b = np.asarray(bits, dtype=np.int64)
    if b.size and (b.min() < 0 or b.max() >= (1 << CODE_BITS)):
        raise ContractError("code bits out of 7-bit range")
    e = b >> fmt.mantissa_bits
    m = b & (fmt.mant_levels - 1)
    vals = (1.0 + m / fmt.mant_levels) * np.exp2(e)
    return np.where(b == 0, 0.0, vals)


class QuantResult(NamedTuple):
    codes: np.ndarray  # uint8 bit patterns
    signs: np.ndarray  # bool, True where the source value was negative
    scale: QuantScale


def quantize_tensor(values: np.ndarray, fmt: FpFormat = E2M5, scale: float | None = None) -> QuantResult:
    """Max-abs post-training quantization of a real tensor.

    The scale maps the largest magnitude onto the top decodable value;
    each element is then encoded round-to-nearest.  Signs are stored out
    of band.  An all-zero tensor gets scale 1 and all-zero codes.
    """
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise ContractError("cannot quantize an empty tensor")
    if scale is None:
        max_abs = float(np.max(np.abs(x)))
        scale = fmt.max_value / max_abs if max_abs > 0 else 1.0
    codes, _, _ = encode_values(np.abs(x) * scale, fmt, mode="nearest")
    return QuantResult(codes, x < 0, QuantScale(scale))


def dequantize_tensor(q: QuantResult, fmt: FpFormat = E2M5) -> np.ndarray:
    vals = decode_bits(q.codes, fmt) / q.scale.scale
    return np.where(q.signs, -vals, vals)


class Int8Result(NamedTuple):
    codes: np.ndarray  # uint8
    signs: np.ndarray
    max_value: float


def int8_quantize(values: np.ndarray, max_value: float | None = None) -> Int8Result:
    """Uniform 256-level quantization of magnitudes over [0, max]."""
    x = np.asarray(values, dtype=float)
    if max_value is None:
        max_value = float(np.max(np.abs(x))) if x.size else 0.0
    if max_value <= 0:
        return Int8Result(np.zeros(x.shape, dtype=np.uint8), x < 0, 1.0)
    codes = np.rint(np.clip(np.abs(x) / max_value, 0.0, 1.0) * 255).astype(np.uint8)
    return Int8Result(codes, x < 0, max_value)


def int8_dequantize(q: Int8Result) -> np.ndarray:
    vals = q.codes.astype(float) * (q.max_value / 255.0)
    return np.where(q.signs, -vals, vals)
