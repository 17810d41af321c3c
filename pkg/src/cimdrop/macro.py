"""Behavioral model of the 8T-SRAM compute-in-memory array.

One :class:`MacroState` holds one stored bitplane mapping (``rows x cols``
bits), the row/column dropout gates and a clock counter. Each evaluated row
costs one clock: product lines discharge where input bit, stored bit and
column gate are all one, and the sum line settles to the multiply-average
voltage ``vdd - vdd/den * count``.

Signed accumulation uses a pair of sum lines. Each product line is steered to
the left (``polarity = +1``) or right (``-1``) line, both lines are digitized,
and the accumulator subtracts the right count from the left one.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .ledger import EnergyLedger

__all__ = ["MacroConfig", "MacroState", "MacroBank", "MacroError"]


class MacroError(ValueError):
    pass


@dataclass(frozen=True)
class MacroConfig:
    rows: int = 16
    cols: int = 31
    vdd: float = 0.85
    clock_ghz: float = 1.0
    mav_denominator: str = "physical"

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise MacroError("macro geometry must be at least 1x1")
        if not self.vdd > 0:
            raise MacroError("vdd must be positive")
        if self.mav_denominator not in ("physical", "active"):
            raise MacroError("mav_denominator must be 'physical' or 'active'")


class MacroState:
    """Single-owner mutable array state."""

    def __init__(self, config: MacroConfig = MacroConfig(), ledger: Optional[EnergyLedger] = None,
                 trace: bool = False):
        self.config = config
        self.ledger = ledger if ledger is not None else EnergyLedger()
        self.weight_bits = np.zeros((config.rows, config.cols), dtype=np.uint8)
        self.row_mask = np.ones(config.rows, dtype=np.uint8)
        self.col_mask = np.ones(config.cols, dtype=np.uint8)
        self.cycle_counter = 0
        self.trace_enabled = trace
        self.trace: list[tuple[int, int, str, float]] = []

    # -- state updates -------------------------------------------------
    def write_weights(self, bits) -> None:
        """Replace the stored bitplane. Writes are outside the inference loop
        and are not charged to any counter."""
        b = np.asarray(bits)
        if b.shape != self.weight_bits.shape:
            raise MacroError(f"weight matrix shape {b.shape} != array {self.weight_bits.shape}")
        if np.any((b != 0) & (b != 1)):
            raise MacroError("weight bits must be 0/1")
        self.weight_bits = b.astype(np.uint8, copy=True)

    def set_masks(self, input_mask, output_mask) -> None:
        im = np.asarray(input_mask).astype(np.uint8).reshape(-1)
        om = np.asarray(output_mask).astype(np.uint8).reshape(-1)
        if im.size != self.config.cols or om.size != self.config.rows:
            raise MacroError("mask lengths do not match macro geometry")
        self.col_mask = im.copy()
        self.row_mask = om.copy()

    # -- evaluation ----------------------------------------------------
    def denominator(self) -> int:
        if self.config.mav_denominator == "physical":
            return self.config.cols
        return int(self.col_mask.sum())

    def mav(self, count):
        """Sum-line voltage for ``count`` discharged product lines."""
        den = self.denominator()
        vdd = self.config.vdd
        if den == 0:
            return np.full_like(np.asarray(count, dtype=float), vdd)
        return vdd - (vdd / den) * np.asarray(count, dtype=float)

    def _check_input(self, input_bits) -> np.ndarray:
        x = np.asarray(input_bits).astype(np.uint8).reshape(-1)
        if x.size != self.config.cols:
            raise MacroError(f"input length {x.size} != {self.config.cols} columns")
        return x

    def evaluate_cycle(self, input_bits, active_row: int) -> float:
        """Single-ended evaluation of one row; returns the sum-line voltage."""
        x = self._check_input(input_bits)
        if not 0 <= active_row < self.config.rows:
            raise MacroError(f"row {active_row} out of range")
        if not self.row_mask[active_row]:
            raise MacroError(f"row {active_row} is masked out")
        count = int(np.sum(x & self.weight_bits[active_row] & self.col_mask))
        v = float(self.mav(count))
        self._tick(1)
        if self.trace_enabled:
            self.trace.append((self.cycle_counter - 1, active_row, "SLL", v))
        return v

    def evaluate_rows(self, input_bits, rows, polarity=None):
        """Evaluate ``rows`` one per clock on the differential sum-line pair.

        ``polarity`` is ``+1/-1`` per column (shape ``(cols,)``) or per cell
        (shape ``(len(rows), cols)``); ``None`` steers everything left.
        Returns ``(mav_left, mav_right)`` arrays, one entry per row.
        """
        x = self._check_input(input_bits)
        rows = np.asarray(rows, dtype=np.int64).reshape(-1)
        if rows.size == 0:
            return np.empty(0), np.empty(0)
        if rows.min() < 0 or rows.max() >= self.config.rows:
            raise MacroError("row index out of range")
        if not np.all(self.row_mask[rows]):
            raise MacroError("cannot select a masked-out row")
        prod = self.weight_bits[rows] & (x & self.col_mask)[None, :]
        if polarity is None:
            left = prod.sum(axis=1)
            right = np.zeros_like(left)
        else:
            pol = np.asarray(polarity)
            pos = (pol > 0) if pol.shape == prod.shape else np.broadcast_to(pol > 0, prod.shape)
            total = prod.sum(axis=1, dtype=np.int64)
            left = (prod & pos).sum(axis=1, dtype=np.int64)
            right = total - left
        v_left = self.mav(left)
        v_right = self.mav(right)
        start = self.cycle_counter
        self._tick(rows.size)
        if self.trace_enabled:
            for t, (r, vl, vr) in enumerate(zip(rows.tolist(), v_left.tolist(), v_right.tolist())):
                self.trace.append((start + t, r, "SLL", vl))
                self.trace.append((start + t, r, "SLR", vr))
        return v_left, v_right

    def idle_cycles(self, n: int) -> None:
        """Clock cycles occupied without a row evaluation (gated rows)."""
        self._tick(n)

    def _tick(self, n: int) -> None:
        self.cycle_counter += int(n)
        self.ledger.add("pl_precharge_cycles", n)

    def write_trace_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["cycle", "row", "line", "mav_v"])
            for cyc, row, line, v in self.trace:
                w.writerow([cyc, row, line, f"{v:.9f}"])


class MacroBank:
    """Grid of identical macros tiling a ``fan_out x fan_in`` layer.

    Tile ``(ti, tj)`` holds output rows ``ti*rows ...`` and input columns
    ``tj*cols ...``; partial sums of column tiles are added digitally. All
    tiles report into one shared ledger.
    """

    def __init__(self, config: MacroConfig, shape: tuple[int, int], ledger: Optional[EnergyLedger] = None,
                 trace: bool = False):
        fan_out, fan_in = shape
        if fan_out < 1 or fan_in < 1:
            raise MacroError("layer shape must be positive")
        self.config = config
        self.shape = (int(fan_out), int(fan_in))
        self.ledger = ledger if ledger is not None else EnergyLedger()
        self.r_tiles = -(-fan_out // config.rows)
        self.c_tiles = -(-fan_in // config.cols)
        self.tiles = [[MacroState(config, self.ledger, trace) for _ in range(self.c_tiles)]
                      for _ in range(self.r_tiles)]

    @classmethod
    def wrap(cls, macro: MacroState, shape: tuple[int, int]) -> "MacroBank":
        """Single-tile bank around an existing macro (layer must fit)."""
        if shape[0] > macro.config.rows or shape[1] > macro.config.cols:
            raise MacroError(f"layer {shape} does not fit a {macro.config.rows}x{macro.config.cols} macro")
        bank = cls.__new__(cls)
        bank.config = macro.config
        bank.shape = (int(shape[0]), int(shape[1]))
        bank.ledger = macro.ledger
        bank.r_tiles = bank.c_tiles = 1
        bank.tiles = [[macro]]
        return bank

    def __iter__(self):
        R, C = self.config.rows, self.config.cols
        fan_out, fan_in = self.shape
        for ti in range(self.r_tiles):
            for tj in range(self.c_tiles):
                rs = slice(ti * R, min((ti + 1) * R, fan_out))
                cs = slice(tj * C, min((tj + 1) * C, fan_in))
                yield self.tiles[ti][tj], rs, cs

    @property
    def cycle_counter(self) -> int:
        return sum(t.cycle_counter for row in self.tiles for t in row)

    @property
    def trace(self) -> list:
        out = []
        for ti, row in enumerate(self.tiles):
            for tj, t in enumerate(row):
                out.extend((ti, tj) + rec for rec in t.trace)
        return out

    def write_trace_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tile_row", "tile_col", "cycle", "row", "line", "mav_v"])
            for ti, tj, cyc, row, line, v in self.trace:
                w.writerow([ti, tj, cyc, row, line, f"{v:.9f}"])
