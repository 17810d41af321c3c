"""The multiplication-free correlation operator.

``w (+) x = sum_i sign(x_i)*|w_i| + sign(w_i)*|x_i|``

Each term multiplies a one-bit sign by a multibit magnitude, so it can run one
magnitude bitplane per clock: ``n - 1`` planes of ``|w|`` gated by ``sign(x)``
followed by ``n - 1`` planes of ``|x|`` gated by ``sign(w)``. The two halves
are kept apart (``xw`` and ``wx`` partials) because they carry the weight and
input LSB scales respectively.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .fixedpoint import QuantMatrix, QuantVector
from .macro import MacroBank, MacroState
from .sar_adc import IdealAdc

__all__ = [
    "XW",
    "WX",
    "MfStep",
    "MfSchedule",
    "build_schedule",
    "conventional_cycles",
    "mf_reference",
    "mf_reference_parts",
    "mf_reference_matrix",
    "mf_bitplane_execute",
    "correlate",
    "conventional_correlate",
    "conventional_reference_matrix",
    "twos_complement_plane",
]

XW = "sign(x)*abs(w)"
WX = "sign(w)*abs(x)"


@dataclass(frozen=True)
class MfStep:
    selector: str
    plane: int

    @property
    def shift_weight(self) -> int:
        return 1 << self.plane


@dataclass(frozen=True)
class MfSchedule:
    precision_n: int
    steps: tuple[MfStep, ...]

    def __len__(self) -> int:
        return len(self.steps)


def build_schedule(n: int) -> MfSchedule:
    """``2(n-1)`` steps: every ``|w|`` plane LSB first, then every ``|x|`` plane."""
    if n < 2:
        raise ValueError(f"precision must be >= 2 bits, got {n}")
    steps = [MfStep(XW, k) for k in range(n - 1)] + [MfStep(WX, k) for k in range(n - 1)]
    return MfSchedule(n, tuple(steps))


def conventional_cycles(n: int) -> int:
    """Plane-pair count of the ordinary multibit product under bitplane processing."""
    if n < 2:
        raise ValueError(f"precision must be >= 2 bits, got {n}")
    return n * n


def _check_pair(w: QuantVector, x: QuantVector):
    if len(w) != len(x):
        raise ValueError(f"length mismatch: {len(w)} vs {len(x)}")
    if w.precision_n != x.precision_n:
        raise ValueError("operands have different precisions")


def mf_reference_parts(w: QuantVector, x: QuantVector, mask=None) -> tuple[int, int]:
    """Direct integer evaluation, returned as ``(sum sign(x)|w|, sum sign(w)|x|)``.

    ``mask`` gates whole elements (a dropped input contributes to neither term).
    """
    _check_pair(w, x)
    m = np.ones(len(w), dtype=np.int64) if mask is None else np.asarray(mask, dtype=np.int64)
    xw = int(np.sum(m * x.signs * w.magnitudes))
    wx = int(np.sum(m * w.signs * x.magnitudes))
    return xw, wx


def mf_reference(w: QuantVector, x: QuantVector, mask=None) -> int:
    xw, wx = mf_reference_parts(w, x, mask)
    return xw + wx


def mf_reference_matrix(W: QuantMatrix, x: QuantVector, mask=None) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise oracle for a whole layer; returns ``(xw, wx)`` integer vectors."""
    m = np.ones(W.shape[1], dtype=np.int64) if mask is None else np.asarray(mask, dtype=np.int64)
    xw = (W.magnitudes * (m * x.signs)[None, :]).sum(axis=1)
    wx = (W.signs * (m * x.magnitudes)[None, :]).sum(axis=1)
    return xw.astype(np.int64), wx.astype(np.int64)


def correlate(W: QuantMatrix, x: QuantVector, bank: MacroBank, adc=None, col_active=None, rows=None,
              gated_rows=None, schedule: Optional[MfSchedule] = None, record: Optional[list] = None,
              gate_idle: bool = True):
    """Run the bitplane schedule for ``rows`` of ``W`` against ``x`` on ``bank``.

    ``col_active`` gates input columns (dropout); ``gated_rows`` are rows that
    hold their clock slot but are not evaluated (output dropout in the dense
    flow). Returns the shift-added ``(xw, wx)`` partial vectors over all rows
    (untouched rows stay zero). If ``record`` is a list, ``(step, rows,
    partials)`` tuples are appended to it.
    """
    fan_out, fan_in = W.shape
    n = W.precision_n
    cols_on, rows, gated = _resolve_rows(W, x, bank, col_active, rows, gated_rows)
    if schedule is None:
        schedule = build_schedule(n)
    elif schedule.precision_n != n:
        raise ValueError("schedule precision does not match operands")
    adc = adc if adc is not None else IdealAdc()

    cfg = bank.config
    R, C = cfg.rows, cfg.cols
    xw = np.zeros(fan_out, dtype=np.int64)
    wx = np.zeros(fan_out, dtype=np.int64)
    ledger = bank.ledger
    w_planes = {}
    x_planes = {}

    for tile, rs, cs in bank:
        sel = rows[(rows >= rs.start) & (rows < rs.stop)]
        n_gated = int(np.count_nonzero((gated >= rs.start) & (gated < rs.stop)))
        if sel.size == 0 and n_gated == 0:
            continue
        local = sel - rs.start
        nr = rs.stop - rs.start
        nc = cs.stop - cs.start
        col_mask = np.zeros(C, dtype=np.uint8)
        col_mask[:nc] = cols_on[cs]
        row_mask = np.zeros(R, dtype=np.uint8)
        row_mask[local] = 1
        tile.set_masks(col_mask, row_mask)
        for step in schedule.steps:
            k = step.plane
            stored = np.zeros((R, C), dtype=np.uint8)
            in_bits = np.zeros(C, dtype=np.uint8)
            pol = np.ones((sel.size, C), dtype=np.int64)
            if step.selector == XW:
                if k not in w_planes:
                    w_planes[k] = W.bitplane(k)
                stored[:nr, :nc] = w_planes[k][rs, cs]
                in_bits[:nc] = 1
                pol[:, :nc] = x.signs[cs][None, :]
            else:
                if k not in x_planes:
                    x_planes[k] = x.bitplane(k)
                stored[:nr, :nc] = 1
                in_bits[:nc] = x_planes[k][cs]
                pol[:, :nc] = W.signs[sel][:, cs]
            tile.write_weights(stored)
            if sel.size:
                v_l, v_r = tile.evaluate_rows(in_bits, local, pol)
                driven = (in_bits & col_mask).astype(bool)[None, :]
                live = np.concatenate([(driven & (pol > 0)).any(axis=1), (driven & (pol < 0)).any(axis=1)])
                counts = _digitize_live(adc, np.concatenate([v_l, v_r]), live, tile.denominator(), cfg.vdd,
                                        ledger, gate_idle)
                partial = counts[: sel.size] - counts[sel.size:]
                ledger.add("shift_add_ops", sel.size)
                target = xw if step.selector == XW else wx
                target[sel] += partial << k
                if record is not None:
                    record.append((step, sel.copy(), partial.copy()))
            if n_gated:
                tile.idle_cycles(n_gated)
    return xw, wx


def _digitize_live(adc, mavs, live, den, vdd, ledger, gate_idle):
    if not gate_idle or live.all():
        return adc.digitize(mavs, den, vdd, ledger)
    counts = np.zeros(mavs.size, dtype=np.int64)
    if live.any():
        counts[live] = adc.digitize(mavs[live], den, vdd, ledger)
    ledger.add("adc_gated_conversions", int(np.count_nonzero(~live)))
    return counts


def _resolve_rows(W, x, bank, col_active, rows, gated_rows):
    fan_out, fan_in = W.shape
    if len(x) != fan_in:
        raise ValueError(f"input length {len(x)} != layer fan-in {fan_in}")
    if bank.shape != W.shape:
        raise ValueError(f"bank shape {bank.shape} != layer shape {W.shape}")
    if x.precision_n != W.precision_n:
        raise ValueError("weights and input have different precisions")
    cols_on = np.ones(fan_in, dtype=np.uint8) if col_active is None else np.asarray(col_active, dtype=np.uint8)
    rows = np.arange(fan_out) if rows is None else np.unique(np.asarray(rows, dtype=np.int64))
    gated = np.zeros(0, dtype=np.int64) if gated_rows is None else np.unique(np.asarray(gated_rows, dtype=np.int64))
    return cols_on, rows, gated


def twos_complement_plane(values, k: int, n: int) -> np.ndarray:
    """Bit ``k`` of the ``n``-bit two's-complement encoding of ``values``."""
    if not 0 <= k < n:
        raise IndexError(f"plane {k} outside 0..{n - 1}")
    v = np.asarray(values, dtype=np.int64) & ((1 << n) - 1)
    return ((v >> k) & 1).astype(np.uint8)


def conventional_reference_matrix(W: QuantMatrix, x: QuantVector, mask=None) -> np.ndarray:
    """Plain integer dot products ``W @ x`` over unmasked columns."""
    m = np.ones(W.shape[1], dtype=np.int64) if mask is None else np.asarray(mask, dtype=np.int64)
    return (W.values * (m * x.values)[None, :]).sum(axis=1).astype(np.int64)


def conventional_correlate(W: QuantMatrix, x: QuantVector, bank: MacroBank, adc=None, col_active=None,
                           rows=None, gated_rows=None, gate_idle: bool = True) -> np.ndarray:
    """Ordinary multibit dot product, one two's-complement plane pair per clock.

    ``n * n`` clocks per row; pairs involving exactly one sign plane carry a
    negative weight. Returns the integer products for all rows.
    """
    cols_on, rows, gated = _resolve_rows(W, x, bank, col_active, rows, gated_rows)
    n = W.precision_n
    adc = adc if adc is not None else IdealAdc()
    cfg = bank.config
    R, C = cfg.rows, cfg.cols
    out = np.zeros(W.shape[0], dtype=np.int64)
    ledger = bank.ledger
    w_planes = [twos_complement_plane(W.values, i, n) for i in range(n)]
    x_planes = [twos_complement_plane(x.values, j, n) for j in range(n)]
    for tile, rs, cs in bank:
        sel = rows[(rows >= rs.start) & (rows < rs.stop)]
        n_gated = int(np.count_nonzero((gated >= rs.start) & (gated < rs.stop)))
        if sel.size == 0 and n_gated == 0:
            continue
        local = sel - rs.start
        nr, nc = rs.stop - rs.start, cs.stop - cs.start
        col_mask = np.zeros(C, dtype=np.uint8)
        col_mask[:nc] = cols_on[cs]
        row_mask = np.zeros(R, dtype=np.uint8)
        row_mask[local] = 1
        tile.set_masks(col_mask, row_mask)
        for i in range(n):
            stored = np.zeros((R, C), dtype=np.uint8)
            stored[:nr, :nc] = w_planes[i][rs, cs]
            tile.write_weights(stored)
            for j in range(n):
                in_bits = np.zeros(C, dtype=np.uint8)
                in_bits[:nc] = x_planes[j][cs]
                if sel.size:
                    v, _ = tile.evaluate_rows(in_bits, local)
                    live = np.full(sel.size, bool((in_bits & col_mask).any()))
                    counts = _digitize_live(adc, v, live, tile.denominator(), cfg.vdd, ledger, gate_idle)
                    ledger.add("shift_add_ops", sel.size)
                    sign = -1 if (i == n - 1) != (j == n - 1) else 1
                    out[sel] += sign * (counts << (i + j))
                if n_gated:
                    tile.idle_cycles(n_gated)
    return out


def mf_bitplane_execute(w: QuantVector, x: QuantVector, schedule: MfSchedule, array: MacroState, adc=None,
                        input_mask=None, record: Optional[list] = None) -> int:
    """One correlation on row 0 of ``array``; ``2(n-1)`` clocks."""
    _check_pair(w, x)
    if schedule.precision_n != w.precision_n:
        raise ValueError("schedule precision does not match operands")
    W = QuantMatrix(w.signs[None, :], w.magnitudes[None, :], w.precision_n, w.scale)
    bank = MacroBank.wrap(array, W.shape)
    xw, wx = correlate(W, x, bank, adc, col_active=input_mask, schedule=schedule, record=record)
    return int(xw[0] + wx[0])
