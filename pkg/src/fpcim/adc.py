"""Dynamic-range-adaptive FP-ADC model.

The converter integrates the column current onto a reconfigurable
capacitor bank.  Each time the integrator output reaches ``v_th`` an
extra capacitor is switched in and the charge redistributes, dropping the
output to exactly ``v_mid = (v_th + v_reset) / 2`` thanks to the doubling
bank ``[C, C, 2C, 4C, ...]``.  The number of charge-share events is the
exponent; the residue voltage sampled at ``t_int`` is digitized by a
single-slope ramp into the mantissa.  A result that never reaches
``v_mid`` by the sample moment is not read out (zero code, underflow
flag); running out of bank capacitors saturates to the top code.

Two conversion paths are provided: ``simulate_transient`` is the
event-driven simulation with a full trace, ``convert_analytic`` the
closed-form converter used as its oracle.  Both share the single-slope
readout, which uses ceiling semantics (the counter stops on the first
ramp step at or above the sampled voltage, a +1/2 LSB bias).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ContractError
from .fpcodec import E2M5, FpCode, FpFormat

__all__ = [
    "AdcConfig",
    "AdcEvent",
    "AdcResult",
    "charge_share",
    "single_slope",
    "convert_analytic",
    "convert_analytic_array",
    "simulate_transient",
    "int8_baseline_convert",
    "trace_to_csv",
    "FP_CONVERSION_TIME",
    "INT8_CONVERSION_TIME",
]

# Full conversion windows: 100 ns integrate + 100 ns ramp for the adaptive
# path; the fixed-range INT8 baseline needs a 4x longer ramp to keep its
# LSB, 100 ns + 400 ns.
FP_CONVERSION_TIME = 200e-9
INT8_CONVERSION_TIME = 500e-9


def _default_bank(fmt: FpFormat, c_int: float) -> tuple[float, ...]:
    """[C, C, 2C, 4C, ...]: one doubling capacitor per exponent step."""
    return (c_int,) + tuple(c_int * 2.0**k for k in range(fmt.exp_max))


@dataclass(frozen=True)
class AdcConfig:
    """Capacitor bank, thresholds and timing of one column converter."""

    c_int: float = 100e-15
    cap_bank: tuple[float, ...] = ()
    v_th: float = 2.0
    v_mid: float = 1.0
    v_reset: float = 0.0
    t_int: float = 95e-9
    ramp_steps: int = 32
    offset: float = 0.0
    offset_cancel: bool = True

    def __post_init__(self):
        if not self.cap_bank:
            object.__setattr__(self, "cap_bank", _default_bank(E2M5, self.c_int))
        if self.c_int <= 0 or self.t_int <= 0:
            raise ContractError("c_int and t_int must be positive")
        if self.cap_bank[0] != self.c_int:
            raise ContractError("cap_bank[0] must equal c_int")
        expected = _default_bank_from(self.c_int, len(self.cap_bank))
        if tuple(self.cap_bank) != expected:
            raise ContractError(
                "cap_bank must follow the doubling sequence [C, C, 2C, 4C, ...]"
            )
        if not self.v_reset < self.v_mid < self.v_th:
            raise ContractError("need v_reset < v_mid < v_th")
        if not math.isclose(self.v_mid, 0.5 * (self.v_th + self.v_reset), rel_tol=1e-12):
            raise ContractError("charge sharing requires v_mid = (v_th + v_reset) / 2")
        if self.v_reset != 0.0:
            raise ContractError("the exponent segmentation requires v_reset = 0")
        if self.ramp_steps < 2:
            raise ContractError("ramp needs at least 2 steps")

    @classmethod
    def for_format(cls, fmt: FpFormat, c_int: float = 100e-15, **kwargs) -> "AdcConfig":
        return cls(
            c_int=c_int,
            cap_bank=_default_bank(fmt, c_int),
            ramp_steps=fmt.mant_levels,
            **kwargs,
        )

    @property
    def exp_max(self) -> int:
        """Largest exponent: one per extra capacitor in the bank."""
        return len(self.cap_bank) - 1

    @property
    def x_unit(self) -> float:
        """Current that integrates to v_mid on C_int over t_int: the x = 1 point."""
        return self.v_mid * self.c_int / self.t_int


def _default_bank_from(c_int: float, n: int) -> tuple[float, ...]:
    return (c_int,) + tuple(c_int * 2.0**k for k in range(n - 1))


@dataclass
class AdcEvent:
    """One timestamped point of the transient: reset, crossing, share, sample."""

    time: float
    kind: str  # reset | threshold-crossing | charge-share | sample | ramp-compare
    v_o: float
    switch_state: tuple[int, ...] = ()


@dataclass
class AdcResult:
    code: FpCode
    v_m: float
    underflow: bool = False
    saturated: bool = False
    trace: list[AdcEvent] = field(default_factory=list)


def charge_share(v_o: float, c_active: float, c_next: float, v_reset: float = 0.0) -> float:
    """Voltage after the active bank shares charge with the next capacitor.

    Exact charge conservation:
    ``(c_active * v_o + c_next * v_reset) / (c_active + c_next)``.
    """
    return (c_active * v_o + c_next * v_reset) / (c_active + c_next)


def single_slope(v_m: float, config: AdcConfig) -> int:
    """Mantissa code for a sampled voltage in [v_mid, v_th).

    Counter semantics: the ramp starts one step above v_mid and the count
    is read when it meets or exceeds v_m, i.e. ceiling rounding clamped to
    the top step.
    """
    if not (config.v_mid <= v_m < config.v_th):
        raise ContractError(f"sampled voltage {v_m} outside [{config.v_mid}, {config.v_th})")
    step = (config.v_th - config.v_mid) / config.ramp_steps
    k = math.ceil((v_m - config.v_mid) / step)
    return min(max(k, 0), config.ramp_steps - 1)


def _format_for(config: AdcConfig, fmt: FpFormat) -> None:
    if config.exp_max != fmt.exp_max or config.ramp_steps != fmt.mant_levels:
        raise ContractError(
            f"ADC bank/ramp ({config.exp_max + 1} caps, {config.ramp_steps} steps) "
            f"does not match {fmt.name}"
        )


def convert_analytic(i_mac: float, config: AdcConfig, fmt: FpFormat = E2M5) -> AdcResult:
    """Closed-form conversion of a constant current (no trace).

    With ``x = i_mac * t_int / (c_int * v_mid)``: x < 1 underflows to the
    zero code, ``floor(log2 x)`` beyond the bank saturates to the top
    code, otherwise the exponent is ``floor(log2 x)`` and the mantissa the
    single-slope ceiling of the residue ``v_mid * x / 2^e``.
    """
    if i_mac < 0:
        raise ContractError("negative MAC current")
    _format_for(config, fmt)
    x = i_mac * config.t_int / (config.c_int * config.v_mid)
    if x < 1.0:
        return AdcResult(FpCode(0, 0, fmt), v_m=x * config.v_mid, underflow=True)
    e = math.frexp(x)[1] - 1  # exact binade, no log rounding at the edges
    if e > config.exp_max:
        return AdcResult(
            FpCode(fmt.exp_max, fmt.mant_levels - 1, fmt), v_m=config.v_th, saturated=True
        )
    v_m = config.v_mid * (x / 2.0**e)
    return AdcResult(FpCode(e, single_slope(v_m, config), fmt), v_m=v_m)


def convert_analytic_array(i_mac: np.ndarray, config: AdcConfig, fmt: FpFormat = E2M5):
    """Vectorized analytic conversion.

    Returns (code_bits uint8, underflow, saturated, v_m) arrays.
    """
    i = np.asarray(i_mac, dtype=float)
    if i.size and np.min(i) < 0:
        raise ContractError("negative MAC current")
    _format_for(config, fmt)
    # same expression grouping as the scalar path, for bit-identical x
    x = i * config.t_int / (config.c_int * config.v_mid)
    underflow = x < 1.0
    mant_frac, expo = np.frexp(np.maximum(x, 1.0))
    e = expo - 1  # x = mant_frac * 2^expo with mant_frac in [0.5, 1)
    saturated = e > config.exp_max
    e = np.clip(e, 0, config.exp_max)
    v_m = config.v_mid * (2.0 * mant_frac)  # x / 2^e in [1, 2) scaled to volts
    step = (config.v_th - config.v_mid) / config.ramp_steps
    mant = np.ceil((v_m - config.v_mid) / step).astype(int)
    mant = np.clip(mant, 0, config.ramp_steps - 1)
    bits = (e << fmt.mantissa_bits) | mant
    bits = np.where(underflow, 0, bits)
    bits = np.where(saturated, (fmt.exp_max << fmt.mantissa_bits) | (fmt.mant_levels - 1), bits)
    v_m = np.where(underflow, x * config.v_mid, np.where(saturated, config.v_th, v_m))
    return bits.astype(np.uint8), underflow, saturated, v_m


def _current_segments(i_of_t, t_int: float) -> list[tuple[float, float, float]]:
    """Normalize a constant or piecewise-constant stimulus to (t0, t1, i)."""
    if np.isscalar(i_of_t):
        steps = [(0.0, float(i_of_t))]
    else:
        steps = [(float(t), float(i)) for t, i in i_of_t]
        if not steps or steps[0][0] > 0.0:
            raise ContractError("waveform must start at t = 0")
        times = [t for t, _ in steps]
        if sorted(times) != times:
            raise ContractError("waveform steps must be time-ordered")
    if any(i < 0 for _, i in steps):
        raise ContractError("negative MAC current")
    segments = []
    for idx, (t0, i) in enumerate(steps):
        t1 = steps[idx + 1][0] if idx + 1 < len(steps) else t_int
        if t0 < t_int and t1 > t0:
            segments.append((t0, min(t1, t_int), i))
    return segments


def simulate_transient(i_of_t, config: AdcConfig, fmt: FpFormat = E2M5) -> AdcResult:
    """Event-driven transient of one conversion with a full trace.

    ``i_of_t`` is either a constant current in amperes or a piecewise-
    constant waveform ``[(t0, i0), (t1, i1), ...]`` with t0 = 0.  The
    integrator is advanced analytically within each constant segment;
    threshold crossings trigger charge-share events computed by exact
    charge conservation.
    """
    _format_for(config, fmt)
    segments = _current_segments(i_of_t, config.t_int)

    v = config.v_reset + (0.0 if config.offset_cancel else config.offset)
    c_active = config.cap_bank[0]
    shares = 0
    saturated = False
    sw_bits = lambda: tuple(1 if k < shares else 0 for k in range(config.exp_max))

    trace = [AdcEvent(0.0, "reset", v, sw_bits())]
    for t0, t1, i in segments:
        t = t0
        while t < t1 and not saturated:
            if i <= 0.0:
                break
            t_hit = t + (config.v_th - v) * c_active / i
            if t_hit > t1:
                v += i * (t1 - t) / c_active
                break
            trace.append(AdcEvent(t_hit, "threshold-crossing", config.v_th, sw_bits()))
            if shares >= config.exp_max:
                # Bank exhausted: integration halts at the full bank.
                saturated = True
                v = config.v_th
                t = t_hit
                break
            c_next = config.cap_bank[shares + 1]
            v = charge_share(config.v_th, c_active, c_next, config.v_reset)
            c_active += c_next
            shares += 1
            trace.append(AdcEvent(t_hit, "charge-share", v, sw_bits()))
            t = t_hit
        if saturated:
            break

    v_m = v
    trace.append(AdcEvent(config.t_int, "sample", v_m, sw_bits()))

    if saturated:
        code = FpCode(fmt.exp_max, fmt.mant_levels - 1, fmt)
        return AdcResult(code, v_m=config.v_th, saturated=True, trace=trace)
    if shares == 0 and v_m < config.v_mid:
        return AdcResult(FpCode(0, 0, fmt), v_m=v_m, underflow=True, trace=trace)
    mant = single_slope(v_m, config)
    step = (config.v_th - config.v_mid) / config.ramp_steps
    trace.append(AdcEvent(config.t_int, "ramp-compare", config.v_mid + mant * step, sw_bits()))
    return AdcResult(FpCode(shares, mant, fmt), v_m=v_m, trace=trace)


class Int8Conversion(NamedTuple):
    code: int
    conversion_time: float


def int8_baseline_convert(i_mac: float, config: AdcConfig) -> Int8Conversion:
    """Fixed-range INT8 single-slope reference conversion.

    Uniform 256-step quantization of x over [0, 16) with the same ceiling
    counter semantics; the fixed range costs a 4x longer ramp on the
    100 ns readout, 500 ns total against the adaptive path's 200 ns.
    """
    if i_mac < 0:
        raise ContractError("negative MAC current")
    x = i_mac * config.t_int / (config.c_int * config.v_mid)
    full_scale = 2.0 ** (E2M5.exp_max + 1)  # 16: the whole adaptive input range
    code = min(max(math.ceil(x * 256.0 / full_scale), 0), 255)
    return Int8Conversion(code, INT8_CONVERSION_TIME)


def trace_to_csv(result: AdcResult, path) -> None:
    """Trace columns: time_ns, v_o_volts, active_caps, sw_bits, comparator_out, phase."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time_ns", "v_o_volts", "active_caps", "sw_bits", "comparator_out", "phase"])
        for ev in result.trace:
            writer.writerow(
                [
                    f"{ev.time * 1e9:.6f}",
                    f"{ev.v_o:.9f}",
                    1 + sum(ev.switch_state),
                    "".join(str(b) for b in ev.switch_state),
                    1 if ev.kind == "threshold-crossing" else 0,
                    ev.kind,
                ]
            )
