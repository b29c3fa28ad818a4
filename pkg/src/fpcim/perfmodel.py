"""Analytic latency / throughput / power / efficiency model.

This is a calibrated model, not a circuit power estimator: per-block
powers are inputs.  The defaults are back-solved so that the design-point
comparison table reproduces the macro's published figures (1474.56 GOPS
at 19.89 TOPS/W for E2M5, 1966.08 GOPS at 14.12 TOPS/W for E3M4, the
56.4% ADC power saving and 46.5% total saving against the INT8 baseline,
and the 2.5x conversion-time penalty of the fixed-range INT8 ADC).
One MAC counts as 2 ops (multiply + add), the only convention that
reproduces those throughput numbers exactly.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from fractions import Fraction

from .cimmacro import MacroConfig
from .errors import ConfigError

__all__ = [
    "BlockPowers",
    "EnergyParams",
    "PerfReport",
    "throughput",
    "throughput_from",
    "efficiency",
    "adc_comparison",
    "total_comparison",
    "report_to_csv",
    "report_to_json",
    "DEFAULT_PARAMS",
]

MACRO_ROWS = 576
MACRO_COLS = 256
OPS_PER_MAC = 2

# Conversion windows in integer nanoseconds so published ratios are exact.
FP_CONVERSION_NS = 200
E3M4_CONVERSION_NS = 150
INT8_CONVERSION_NS = 500

# Calibration anchors.
_E2M5_EFFICIENCY = 19.89e12  # ops/J at the E2M5 design point
_E3M4_EFFICIENCY = 14.12e12
ADC_POWER_REDUCTION = 0.564  # adaptive-range ADC vs fixed-range INT8 ADC
TOTAL_POWER_REDUCTION = 0.465  # E2M5 macro vs INT8 macro


@dataclass(frozen=True)
class BlockPowers:
    """Per-block macro power in watts."""

    dac: float
    array: float
    adc: float
    digital: float

    def __post_init__(self):
        for name in ("dac", "array", "adc", "digital"):
            if getattr(self, name) < 0:
                raise ConfigError(f"negative {name} power")

    @property
    def total(self) -> float:
        return self.dac + self.array + self.adc + self.digital


def throughput_from(rows: int, cols: int, latency: float) -> float:
    """Ops per second: 2 * rows * cols per macro cycle."""
    if latency <= 0:
        raise ConfigError("latency must be positive")
    return OPS_PER_MAC * rows * cols / latency


def _default_blocks() -> dict[str, BlockPowers]:
    """Back-solve block powers from the calibration anchors.

    Totals come from throughput / efficiency; the ADC splits follow the
    published reduction, the remaining blocks are plausible fills with the
    digital share taking the residue.
    """
    e2m5_total = throughput_from(MACRO_ROWS, MACRO_COLS, FP_CONVERSION_NS * 1e-9) / _E2M5_EFFICIENCY
    e3m4_total = throughput_from(MACRO_ROWS, MACRO_COLS, E3M4_CONVERSION_NS * 1e-9) / _E3M4_EFFICIENCY
    int8_total = e2m5_total / (1.0 - TOTAL_POWER_REDUCTION)
    int8_adc = 88e-3
    e2m5_adc = int8_adc * (1.0 - ADC_POWER_REDUCTION)
    return {
        "E2M5": BlockPowers(dac=14e-3, array=13e-3, adc=e2m5_adc,
                            digital=e2m5_total - 27e-3 - e2m5_adc),
        "E3M4": BlockPowers(dac=15e-3, array=14e-3, adc=96e-3,
                            digital=e3m4_total - 29e-3 - 96e-3),
        "INT8": BlockPowers(dac=15e-3, array=20e-3, adc=int8_adc,
                            digital=int8_total - 35e-3 - int8_adc),
    }


@dataclass(frozen=True)
class EnergyParams:
    """Per-format block powers; defaults reproduce the calibrated table."""

    blocks: dict

    def __post_init__(self):
        for label, b in self.blocks.items():
            if not isinstance(b, BlockPowers):
                raise ConfigError(f"block powers for {label} must be BlockPowers")

    def total(self, label: str) -> float:
        return self.blocks[label].total


DEFAULT_PARAMS = EnergyParams(_default_blocks())

LATENCY_NS = {"E2M5": FP_CONVERSION_NS, "E3M4": E3M4_CONVERSION_NS, "INT8": INT8_CONVERSION_NS}


@dataclass
class PerfReport:
    format: str
    latency: float
    throughput: float
    total_power: float
    efficiency: float
    blocks: BlockPowers


def throughput(config: MacroConfig) -> float:
    return throughput_from(config.rows, config.cols, config.latency)


def efficiency(config: MacroConfig, params: EnergyParams = DEFAULT_PARAMS,
               label: str | None = None) -> float:
    """Ops per joule: throughput over total macro power."""
    label = label or config.fmt.name
    total = params.total(label)
    if total <= 0:
        raise ConfigError("total power must be positive")
    return throughput(config) / total


def adc_comparison(params: EnergyParams = DEFAULT_PARAMS, label: str = "E2M5") -> dict:
    """Conversion-time and ADC-power ratios against the INT8 baseline.

    The fixed-range converter needs a 2^2 = 4x longer ramp on its 100 ns
    readout to add two bits at the same LSB, stretching the conversion
    from 200 ns to 500 ns; the ADC power saving is a calibrated parameter.
    """
    time_ratio = Fraction(INT8_CONVERSION_NS, LATENCY_NS[label])
    return {
        "fp_conversion_ns": LATENCY_NS[label],
        "int8_conversion_ns": INT8_CONVERSION_NS,
        "time_ratio": float(time_ratio),
        "int8_ramp_factor": 4,
        "adc_power_ratio": params.blocks[label].adc / params.blocks["INT8"].adc,
        "adc_power_reduction": 1.0 - params.blocks[label].adc / params.blocks["INT8"].adc,
    }


def total_comparison(params: EnergyParams = DEFAULT_PARAMS,
                     rows: int = MACRO_ROWS, cols: int = MACRO_COLS) -> list[PerfReport]:
    """Three-format macro comparison table (E2M5, E3M4, INT8)."""
    out = []
    for label in ("E2M5", "E3M4", "INT8"):
        latency = LATENCY_NS[label] * 1e-9
        tp = throughput_from(rows, cols, latency)
        total = params.total(label)
        out.append(PerfReport(label, latency, tp, total, tp / total, params.blocks[label]))
    return out


def report_to_csv(reports: list[PerfReport], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["format", "latency_ns", "throughput_gops", "total_power_mw",
             "efficiency_tops_per_w", "dac_mw", "array_mw", "adc_mw", "digital_mw"]
        )
        for r in reports:
            writer.writerow(
                [r.format, f"{r.latency * 1e9:.1f}", f"{r.throughput / 1e9:.2f}",
                 f"{r.total_power * 1e3:.3f}", f"{r.efficiency / 1e12:.3f}",
                 f"{r.blocks.dac * 1e3:.3f}", f"{r.blocks.array * 1e3:.3f}",
                 f"{r.blocks.adc * 1e3:.3f}", f"{r.blocks.digital * 1e3:.3f}"]
            )


def report_to_json(reports: list[PerfReport], path) -> None:
    payload = [
        {
            "format": r.format,
            "latency_s": r.latency,
            "throughput_ops": r.throughput,
            "total_power_w": r.total_power,
            "efficiency_ops_per_j": r.efficiency,
            "blocks_w": {"dac": r.blocks.dac, "array": r.blocks.array,
                         "adc": r.blocks.adc, "digital": r.blocks.digital},
        }
        for r in reports
    ]
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
