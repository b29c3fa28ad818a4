"""RRAM crossbar analog MAC model.

Signed weights are stored as differential conductance pairs: the positive
column carries ``g_min + |w| * (g_max - g_min)`` for w >= 0 (the negative
column stays at g_min) and symmetrically for w < 0.  Multi-level cells
quantize the magnitude onto ``levels`` uniform conductance steps;
``levels=None`` models an ideal continuously-programmable device.

Column currents follow Ohm's law and Kirchhoff's current law with the
source line clamped: the model works with the current magnitude entering
the integrator, so the inverting-integrator sign flip is absorbed here.
Wire parasitics are not modeled.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ContractError

__all__ = [
    "DeviceModel",
    "ConductancePair",
    "program_weights",
    "weight_levels",
    "mac_currents",
    "export_conductance_csv",
    "import_conductance_csv",
]

MAX_ROWS = 576
MAX_COLS = 256


@dataclass(frozen=True)
class DeviceModel:
    """Programmable-conductance device parameters (siemens)."""

    g_min: float = 0.5e-6
    g_max: float = 20e-6
    levels: int | None = 16
    sigma_rel: float = 0.0

    def __post_init__(self):
        if not 0 <= self.g_min < self.g_max:
            raise ContractError("need 0 <= g_min < g_max")
        if self.levels is not None and self.levels < 2:
            raise ContractError("need at least 2 conductance levels")
        if self.sigma_rel < 0:
            raise ContractError("sigma_rel must be non-negative")

    @property
    def g_lsb(self) -> float:
        """Conductance step per weight level (full swing if continuous)."""
        span = self.g_max - self.g_min
        return span / (self.levels - 1) if self.levels else span

    @property
    def level_scale(self) -> float:
        """Weight-level units per unit normalized weight."""
        return float(self.levels - 1) if self.levels else 1.0


@dataclass(frozen=True)
class ConductancePair:
    """Differential conductance matrices holding one tile of signed weights."""

    g_pos: np.ndarray
    g_neg: np.ndarray

    def __post_init__(self):
        if self.g_pos.shape != self.g_neg.shape or self.g_pos.ndim != 2:
            raise ContractError("g_pos and g_neg must be equal-shape 2D matrices")
        rows, cols = self.g_pos.shape
        if rows > MAX_ROWS or cols > MAX_COLS:
            raise ContractError(f"tile {rows}x{cols} exceeds the {MAX_ROWS}x{MAX_COLS} macro")
        if np.any(self.g_pos < 0) or np.any(self.g_neg < 0):
            raise ContractError("conductances must be non-negative")
        self.g_pos.flags.writeable = False
        self.g_neg.flags.writeable = False

    @property
    def shape(self) -> tuple[int, int]:
        return self.g_pos.shape


def weight_levels(weights: np.ndarray, model: DeviceModel) -> np.ndarray:
    """Signed level numbers the device programming rounds the weights to.

    Integers in [-(levels-1), levels-1] for an MLC device; the normalized
    weights themselves for a continuous one.
    """
    w = np.asarray(weights, dtype=float)
    if model.levels is None:
        return w
    return np.sign(w) * np.rint(np.abs(w) * (model.levels - 1))


def program_weights(weights: np.ndarray, model: DeviceModel, seed: int = 0) -> ConductancePair:
    """Program normalized weights (|w| <= 1) into a differential pair.

    Magnitudes are rounded to the device's conductance levels; programming
    variation is a multiplicative Gaussian ``(1 + sigma_rel * N(0,1))``
    drawn from the given seed, clamped back into [g_min, g_max].
    """
    w = np.atleast_2d(np.asarray(weights, dtype=float))
    if np.max(np.abs(w), initial=0.0) > 1.0:
        raise ContractError("weight magnitudes must be pre-scaled to [0, 1]")

    span = model.g_max - model.g_min
    if model.levels is None:
        q = np.abs(w)
    else:
        q = np.rint(np.abs(w) * (model.levels - 1)) / (model.levels - 1)
    g_on = model.g_min + q * span
    g_pos = np.where(w >= 0, g_on, model.g_min)
    g_neg = np.where(w < 0, g_on, model.g_min)

    if model.sigma_rel > 0:
        rng = np.random.default_rng(seed)
        g_pos = g_pos * (1.0 + model.sigma_rel * rng.standard_normal(w.shape))
        g_neg = g_neg * (1.0 + model.sigma_rel * rng.standard_normal(w.shape))
        g_pos = np.clip(g_pos, model.g_min, model.g_max)
        g_neg = np.clip(g_neg, model.g_min, model.g_max)

    return ConductancePair(np.ascontiguousarray(g_pos), np.ascontiguousarray(g_neg))


def mac_currents(v_in: np.ndarray, g: np.ndarray, v_clamp: float = 0.0) -> np.ndarray:
    """Per-column MAC currents ``I_j = sum_i (v_in[i] - v_clamp) * g[i, j]``.

    ``v_in`` may be a single row-voltage vector or a (rows, n) batch; the
    result is (cols,) or (n, cols) accordingly.
    """
    v = np.asarray(v_in, dtype=float)
    g = np.asarray(g, dtype=float)
    if v.shape[0] != g.shape[0]:
        raise ContractError(f"{v.shape[0]} row voltages for {g.shape[0]} crossbar rows")
    return (v - v_clamp).T @ g


def export_conductance_csv(g: np.ndarray, path) -> None:
    """Row-major conductance dump in siemens."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in np.asarray(g):
            writer.writerow(f"{x:.9e}" for x in row)


def import_conductance_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [[float(x) for x in row] for row in csv.reader(fh) if row]
    return np.array(rows)
