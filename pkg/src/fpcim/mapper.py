"""Mapping of convolutional and fully-connected layers onto CIM macros.

A conv kernel ``(c2, c1, k, k)`` is viewed as a 2D matrix of shape
``(c1*k*k, c2)`` (one column per output channel); FC weights map the same
way.  Matrices larger than one 576x256 macro are split into row and
column tiles; row-split tiles produce partial sums that are added
digitally, so the tiles of one column block form a partial-sum group and
must share a weight scale.  The group sum is scaled back to real weight
units once, after the raw digital accumulation.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .cimmacro import MacroConfig, macro_mac
from .errors import ContractError
from .xbar import ConductancePair, program_weights

__all__ = [
    "LayerSpec",
    "Tile",
    "TilePlan",
    "map_conv",
    "map_fc",
    "map_matrix",
    "im2col",
    "conv_output_shape",
    "MacroBank",
    "PlanResult",
    "execute_plan",
]


@dataclass(frozen=True)
class LayerSpec:
    """Dimensions of one weight-bearing layer (conv or fc)."""

    kind: str
    in_channels: int = 0
    kernel: int = 0
    out_channels: int = 0
    stride: int = 1
    padding: int = 0
    in_features: int = 0
    out_features: int = 0

    def __post_init__(self):
        if self.kind == "conv":
            if min(self.in_channels, self.kernel, self.out_channels, self.stride) < 1:
                raise ContractError("conv dimensions must be >= 1")
            if self.padding < 0:
                raise ContractError("padding must be >= 0")
        elif self.kind == "fc":
            if min(self.in_features, self.out_features) < 1:
                raise ContractError("fc dimensions must be >= 1")
        else:
            raise ContractError(f"unknown layer kind {self.kind!r}")

    @classmethod
    def conv(cls, in_channels, kernel, out_channels, stride=1, padding=0):
        return cls("conv", in_channels=in_channels, kernel=kernel,
                   out_channels=out_channels, stride=stride, padding=padding)

    @classmethod
    def fc(cls, in_features, out_features):
        return cls("fc", in_features=in_features, out_features=out_features)

    @property
    def matrix_shape(self) -> tuple[int, int]:
        """(rows, cols) of the 2D weight view."""
        if self.kind == "conv":
            return self.in_channels * self.kernel * self.kernel, self.out_channels
        return self.in_features, self.out_features


@dataclass(frozen=True)
class Tile:
    id: int
    macro_id: int
    row_start: int
    row_stop: int
    col_start: int
    col_stop: int

    @property
    def rows(self) -> int:
        return self.row_stop - self.row_start

    @property
    def cols(self) -> int:
        return self.col_stop - self.col_start


@dataclass
class TilePlan:
    rows: int
    cols: int
    macro_rows: int
    macro_cols: int
    tiles: list[Tile] = field(default_factory=list)
    partial_sum_groups: list[list[int]] = field(default_factory=list)

    def col_blocks(self) -> list[list[Tile]]:
        """Tiles grouped by column range, row blocks in order."""
        blocks: dict[tuple[int, int], list[Tile]] = {}
        for t in self.tiles:
            blocks.setdefault((t.col_start, t.col_stop), []).append(t)
        return [sorted(v, key=lambda t: t.row_start) for _, v in sorted(blocks.items())]

    def to_json(self) -> str:
        return json.dumps(
            {
                "rows": self.rows,
                "cols": self.cols,
                "macro_rows": self.macro_rows,
                "macro_cols": self.macro_cols,
                "tiles": [dataclasses.asdict(t) for t in self.tiles],
                "partial_sum_groups": self.partial_sum_groups,
            },
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "TilePlan":
        d = json.loads(text)
        return cls(
            rows=d["rows"],
            cols=d["cols"],
            macro_rows=d["macro_rows"],
            macro_cols=d["macro_cols"],
            tiles=[Tile(**t) for t in d["tiles"]],
            partial_sum_groups=[list(g) for g in d["partial_sum_groups"]],
        )


def map_matrix(rows: int, cols: int, macro_rows: int = 576, macro_cols: int = 256) -> TilePlan:
    """Partition a (rows, cols) matrix into macro-sized tiles.

    Row-split tiles of one column block are registered as a partial-sum
    group; plans that fit in a single row of macros have no groups.
    """
    if rows < 1 or cols < 1:
        raise ContractError("matrix dimensions must be >= 1")
    n_row = math.ceil(rows / macro_rows)
    n_col = math.ceil(cols / macro_cols)
    plan = TilePlan(rows, cols, macro_rows, macro_cols)
    for cb in range(n_col):
        group = []
        for rb in range(n_row):
            tid = len(plan.tiles)
            plan.tiles.append(
                Tile(
                    id=tid,
                    macro_id=tid,
                    row_start=rb * macro_rows,
                    row_stop=min((rb + 1) * macro_rows, rows),
                    col_start=cb * macro_cols,
                    col_stop=min((cb + 1) * macro_cols, cols),
                )
            )
            group.append(tid)
        if len(group) > 1:
            plan.partial_sum_groups.append(group)
    return plan


def map_conv(layer: LayerSpec, macro_rows: int = 576, macro_cols: int = 256) -> TilePlan:
    if layer.kind != "conv":
        raise ContractError("map_conv requires a conv layer")
    return map_matrix(*layer.matrix_shape, macro_rows, macro_cols)


def map_fc(layer: LayerSpec, macro_rows: int = 576, macro_cols: int = 256) -> TilePlan:
    if layer.kind != "fc":
        raise ContractError("map_fc requires an fc layer")
    return map_matrix(*layer.matrix_shape, macro_rows, macro_cols)


def conv_output_shape(layer: LayerSpec, h: int, w: int) -> tuple[int, int]:
    oh = (h + 2 * layer.padding - layer.kernel) // layer.stride + 1
    ow = (w + 2 * layer.padding - layer.kernel) // layer.stride + 1
    if oh < 1 or ow < 1:
        raise ContractError(f"kernel {layer.kernel} does not fit a {h}x{w} input")
    return oh, ow


def im2col(x: np.ndarray, layer: LayerSpec) -> np.ndarray:
    """Unfold conv input patches into columns.

    ``x`` is (c, h, w) or a batch (n, c, h, w); the result has shape
    (c*k*k, n*out_h*out_w) with rows ordered (channel, ki, kj) so that
    ``weights_matrix.T @ im2col(x)`` equals the direct convolution.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4 or x.shape[1] != layer.in_channels:
        raise ContractError(f"expected (n, {layer.in_channels}, h, w) input, got {x.shape}")
    n, c, h, w = x.shape
    k, s, p = layer.kernel, layer.stride, layer.padding
    oh, ow = conv_output_shape(layer, h, w)
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
    cols = np.empty((c * k * k, n * oh * ow))
    for ci in range(c):
        for ki in range(k):
            for kj in range(k):
                patch = xp[:, ci, ki : ki + s * oh : s, kj : kj + s * ow : s]
                cols[(ci * k + ki) * k + kj] = patch.reshape(-1)
    return cols


@dataclass
class ProgrammedTile:
    tile: Tile
    pair: ConductancePair
    weight_scale: float
    config: MacroConfig


class MacroBank:
    """Programmed macros for one plan, keyed by tile id."""

    def __init__(self, plan: TilePlan, config: MacroConfig):
        self.plan = plan
        self.config = config
        self.tiles: dict[int, ProgrammedTile] = {}

    @classmethod
    def build(cls, plan: TilePlan, weights: np.ndarray, config: MacroConfig,
              weight_scales: dict[int, float] | float | None = None, seed: int = 0) -> "MacroBank":
        """Normalize and program every tile of the weight matrix.

        ``weight_scales`` maps tile id to its normalization divisor; a
        scalar applies everywhere, None derives max-abs per column block.
        Tiles of one partial-sum group must share a scale so their raw
        digital outputs are summable.
        """
        w = np.asarray(weights, dtype=float)
        if w.shape != (plan.rows, plan.cols):
            raise ContractError(f"weight matrix {w.shape} does not match plan "
                                f"({plan.rows}, {plan.cols})")
        bank = cls(plan, config)
        scales = bank._resolve_scales(w, weight_scales)
        for t in plan.tiles:
            beta = scales[t.id]
            block = w[t.row_start : t.row_stop, t.col_start : t.col_stop] / beta
            pair = program_weights(block, config.device, seed=seed + t.id)
            tile_cfg = dataclasses.replace(config, rows=t.rows, cols=t.cols)
            bank.tiles[t.id] = ProgrammedTile(t, pair, beta, tile_cfg)
        return bank

    def _resolve_scales(self, w: np.ndarray, weight_scales) -> dict[int, float]:
        if isinstance(weight_scales, dict):
            scales = dict(weight_scales)
        elif weight_scales is not None:
            scales = {t.id: float(weight_scales) for t in self.plan.tiles}
        else:
            scales = {}
            for block in self.plan.col_blocks():
                lo, hi = block[0].col_start, block[0].col_stop
                m = float(np.max(np.abs(w[:, lo:hi]), initial=0.0))
                for t in block:
                    scales[t.id] = m if m > 0 else 1.0
        for group in self.plan.partial_sum_groups:
            vals = {scales[tid] for tid in group}
            if len(vals) > 1:
                raise ContractError("partial-sum group tiles must share one weight scale")
        missing = [t.id for t in self.plan.tiles if t.id not in scales]
        if missing:
            raise ContractError(f"no weight scale for tiles {missing}")
        return scales

    def __getitem__(self, tile_id: int) -> ProgrammedTile:
        try:
            return self.tiles[tile_id]
        except KeyError:
            raise ContractError(f"no macro programmed for tile {tile_id}") from None


class PlanResult(NamedTuple):
    values: np.ndarray  # real weight units: sum_i decode(x_i) * W[i, j]
    underflow: np.ndarray
    saturated: np.ndarray


def execute_plan(plan: TilePlan, input_bits: np.ndarray, bank: MacroBank,
                 signs: np.ndarray | None = None, readout: str = "adc") -> PlanResult:
    """Run every tile and reduce partial sums digitally.

    ``input_bits`` covers all matrix rows, (rows,) or (rows, n).  Raw
    per-tile dot products of one column block are summed in double
    precision and scaled back by the block's weight scale once.
    """
    bits = np.asarray(input_bits)
    single = bits.ndim == 1
    bits = bits.reshape(bits.shape[0], -1)
    if bits.shape[0] != plan.rows:
        raise ContractError(f"plan expects {plan.rows} input rows, got {bits.shape[0]}")
    if signs is not None:
        signs = np.asarray(signs).reshape(signs.shape[0], -1)

    n = bits.shape[1]
    out = np.empty((n, plan.cols))
    under = np.empty((n, plan.cols), dtype=bool)
    sat = np.empty((n, plan.cols), dtype=bool)
    for block in plan.col_blocks():
        lo, hi = block[0].col_start, block[0].col_stop
        raw = np.zeros((n, hi - lo))
        b_under = np.ones((n, hi - lo), dtype=bool)
        b_sat = np.zeros((n, hi - lo), dtype=bool)
        beta = bank[block[0].id].weight_scale
        for t in block:
            pt = bank[t.id]
            tile_signs = None if signs is None else signs[t.row_start : t.row_stop]
            res = macro_mac(bits[t.row_start : t.row_stop], pt.pair, pt.config,
                            signs=tile_signs, readout=readout)
            raw += res.digital_values.reshape(n, -1)
            b_under &= res.underflow.reshape(n, -1)
            b_sat |= res.saturated.reshape(n, -1)
        out[:, lo:hi] = raw * (beta / bank.config.device.level_scale)
        under[:, lo:hi] = b_under
        sat[:, lo:hi] = b_sat
    if single:
        return PlanResult(out.reshape(-1), under.reshape(-1), sat.reshape(-1))
    return PlanResult(out, under, sat)
