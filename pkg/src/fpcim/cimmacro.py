"""One compute-in-memory macro: row DACs, differential crossbar, column ADCs.

A macro MAC drives up to 576 row voltages from 7-bit input codes,
collects the differential column currents and converts each column pair
with its own ADC.  The two unsigned conversions are subtracted digitally
in double precision, so the converter never sees a signed value.

The digital result is reported in dimensionless dot-product units
``sum_i decode(input_i) * level_i`` (``level`` the signed integer
conductance level of the cell, or the normalized weight for a continuous
device).  ``scale_chain`` is the factor mapping one dot-product unit to
the ADC's internal x value; weights must be pre-scaled so results land
inside the convertible range.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import adc as adc_mod
from . import dac as dac_mod
from . import fpcodec
from .adc import AdcConfig, convert_analytic_array
from .dac import DacConfig, dac_convert_bits
from .errors import ContractError
from .fpcodec import E2M5, E3M4, FpFormat
from .xbar import ConductancePair, DeviceModel

__all__ = [
    "MacroConfig",
    "MacroResult",
    "scale_chain",
    "macro_mac",
    "ideal_reference",
    "READOUTS",
]

READOUTS = ("adc", "identity", "int8")

# Table-level defaults: total conversion latency per macro cycle.
LATENCY = {E2M5: 200e-9, E3M4: 150e-9}
# Full-scale DAC swing that keeps the top code under the 2.5 V supply.
V_UNIT = {E2M5: 0.1, E3M4: 0.01}


@dataclass(frozen=True)
class MacroConfig:
    rows: int = 576
    cols: int = 256
    fmt: FpFormat = E2M5
    dac: DacConfig = field(default_factory=DacConfig)
    adc: AdcConfig = field(default_factory=AdcConfig)
    device: DeviceModel = field(default_factory=DeviceModel)
    latency: float = 200e-9

    def __post_init__(self):
        if not (1 <= self.rows <= 576 and 1 <= self.cols <= 256):
            raise ContractError("macro dimensions limited to 576x256")
        if self.latency <= self.adc.t_int:
            raise ContractError("macro latency must exceed the ADC integration window")
        dac_mod.check_headroom(self.dac, self.fmt)

    @classmethod
    def for_format(cls, fmt: FpFormat, rows: int = 576, cols: int = 256,
                   device: DeviceModel | None = None, **kwargs) -> "MacroConfig":
        return cls(
            rows=rows,
            cols=cols,
            fmt=fmt,
            dac=kwargs.pop("dac", DacConfig(v_unit=V_UNIT[fmt])),
            adc=kwargs.pop("adc", AdcConfig.for_format(fmt)),
            device=device if device is not None else DeviceModel(),
            latency=kwargs.pop("latency", LATENCY[fmt]),
            **kwargs,
        )


@dataclass
class MacroResult:
    """Per-column conversion results of one macro cycle.

    ``digital_values`` has shape (cols,) for a single input vector or
    (n, cols) for a batch.  Flag arrays match that shape; a column counts
    as underflowed only when both differential conversions underflowed.
    """

    pos_bits: np.ndarray | None
    neg_bits: np.ndarray | None
    digital_values: np.ndarray
    underflow: np.ndarray
    saturated: np.ndarray


def scale_chain(config: MacroConfig) -> float:
    """x value produced by one dot-product unit: v_unit * g_lsb * t_int / c_int."""
    return config.dac.v_unit * config.device.g_lsb * config.adc.t_int / config.adc.c_int


def _levels_from_pair(weights: ConductancePair, device: DeviceModel) -> np.ndarray:
    """Signed levels read back from a differential pair (noiseless device)."""
    raw = (weights.g_pos - weights.g_neg) / device.g_lsb
    if device.levels is None:
        return raw
    return np.rint(raw)


def macro_mac(input_bits: np.ndarray, weights: ConductancePair, config: MacroConfig,
              signs: np.ndarray | None = None, readout: str = "adc") -> MacroResult:
    """One macro MAC: codes in, per-column converted differential results out.

    ``input_bits`` is (rows,) or (rows, n) of 7-bit patterns.  Rows with a
    set sign bit contribute through the complementary column of each
    differential pair (two-phase input scheme).  ``readout`` selects the
    column converter: the adaptive FP ADC, the fixed-range INT8 baseline,
    or an identity bypass that returns the digital dot product directly.
    """
    if readout not in READOUTS:
        raise ContractError(f"unknown readout {readout!r}")
    bits = np.asarray(input_bits)
    single = bits.ndim == 1
    bits = bits.reshape(bits.shape[0], -1)
    if bits.shape[0] != config.rows or weights.shape[0] != config.rows:
        raise ContractError(f"macro expects {config.rows} input rows")
    if weights.shape[1] > config.cols:
        raise ContractError(f"macro has {config.cols} column pairs")

    dec = fpcodec.decode_bits(bits, config.fmt)
    s = scale_chain(config)

    if signs is not None:
        signs = np.asarray(signs, dtype=bool).reshape(bits.shape[0], -1)

    if readout == "identity":
        levels = _levels_from_pair(weights, config.device)
        if signs is not None:
            dec = np.where(signs, -dec, dec)
        digital = dec.T @ levels
        zeros = np.zeros(digital.shape, dtype=bool)
        out = MacroResult(None, None, digital, zeros, zeros)
        return _squeeze_result(out, single)

    volts = dac_convert_bits(bits, config.fmt, config.dac)
    if signs is None:
        i_pos = volts.T @ weights.g_pos
        i_neg = volts.T @ weights.g_neg
    else:
        v_fwd = np.where(signs, 0.0, volts)
        v_rev = np.where(signs, volts, 0.0)
        i_pos = v_fwd.T @ weights.g_pos + v_rev.T @ weights.g_neg
        i_neg = v_fwd.T @ weights.g_neg + v_rev.T @ weights.g_pos

    if readout == "adc":
        pos_bits, under_p, sat_p, _ = convert_analytic_array(i_pos, config.adc, config.fmt)
        neg_bits, under_n, sat_n, _ = convert_analytic_array(i_neg, config.adc, config.fmt)
        dec_pos = fpcodec.decode_bits(pos_bits, config.fmt)
        dec_neg = fpcodec.decode_bits(neg_bits, config.fmt)
        digital = (dec_pos - dec_neg) * (config.adc.v_mid / s)
        out = MacroResult(pos_bits, neg_bits, digital, under_p & under_n, sat_p | sat_n)
        return _squeeze_result(out, single)

    # Fixed-range INT8 baseline readout: 256 uniform steps over x in [0, 16).
    full_scale = 2.0 ** (E2M5.exp_max + 1)
    lsb = full_scale / 256.0
    x_pos = i_pos * (config.adc.t_int / (config.adc.c_int * config.adc.v_mid))
    x_neg = i_neg * (config.adc.t_int / (config.adc.c_int * config.adc.v_mid))
    code_pos = np.clip(np.ceil(x_pos / lsb), 0, 255)
    code_neg = np.clip(np.ceil(x_neg / lsb), 0, 255)
    digital = (code_pos - code_neg) * (lsb * config.adc.v_mid / s)
    sat = (x_pos >= full_scale) | (x_neg >= full_scale)
    under = (code_pos == 0) & (code_neg == 0)
    out = MacroResult(code_pos.astype(np.uint8), code_neg.astype(np.uint8), digital, under, sat)
    return _squeeze_result(out, single)


def _squeeze_result(r: MacroResult, single: bool) -> MacroResult:
    if not single:
        return r
    sq = lambda a: None if a is None else a.reshape(a.shape[-1])
    return MacroResult(
        sq(r.pos_bits), sq(r.neg_bits),
        r.digital_values.reshape(-1), r.underflow.reshape(-1), r.saturated.reshape(-1),
    )


def ideal_reference(decoded_inputs: np.ndarray, weight_levels: np.ndarray) -> np.ndarray:
    """Golden model: exact double-precision differential dot products.

    ``decoded_inputs`` (rows,) or (rows, n), ``weight_levels`` (rows, cols)
    signed; returns the per-column dot products in the same units as
    ``MacroResult.digital_values``.
    """
    d = np.asarray(decoded_inputs, dtype=float)
    w = np.asarray(weight_levels, dtype=float)
    if d.shape[0] != w.shape[0]:
        raise ContractError("input length must match weight rows")
    return d.T @ w
