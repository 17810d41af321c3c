"""Successive-approximation digitization of sum-line voltages.

Both converters share one uniform output grid: ``2**adc_bits`` cells of width
``v_max / 2**adc_bits`` and code ``floor(v / lsb)`` clipped to the top code.
The symmetric tree is the usual balanced binary search. The asymmetric tree
places each reference so that it splits the empirical voltage mass of its
segment in half, so frequent voltages resolve in fewer comparisons.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .ledger import EnergyLedger

__all__ = [
    "SarTree",
    "build_symmetric",
    "build_asymmetric",
    "grid_code",
    "IdealAdc",
    "SarAdc",
    "MavRecorder",
    "histogram",
    "write_histogram_csv",
]


def grid_code(mav, adc_bits: int, v_max: float):
    """Code of the uniform grid cell containing ``mav``."""
    top = (1 << adc_bits) - 1
    lsb = v_max / (1 << adc_bits)
    return np.clip(np.floor(np.asarray(mav, dtype=float) / lsb), 0, top).astype(np.int64)


def histogram(mavs, adc_bits: int, v_max: float) -> np.ndarray:
    """Counts of samples per grid cell."""
    return np.bincount(grid_code(mavs, adc_bits, v_max), minlength=1 << adc_bits)


@dataclass
class SarTree:
    """Flat threshold tree. Node 0 is the root; ``lo[i] < 0`` marks a leaf."""

    mode: str
    adc_bits: int
    v_max: float
    thresholds: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    codes: np.ndarray
    degenerate: bool = False

    @property
    def lsb(self) -> float:
        return self.v_max / (1 << self.adc_bits)

    @property
    def n_nodes(self) -> int:
        return self.lo.size

    def depth(self) -> int:
        def rec(i):
            return 0 if self.lo[i] < 0 else 1 + max(rec(self.lo[i]), rec(self.hi[i]))
        return rec(0)

    def convert(self, mav: float, ledger: Optional[EnergyLedger] = None) -> tuple[int, int]:
        codes, cycles = self.convert_many(np.array([mav], dtype=float), ledger)
        return int(codes[0]), int(cycles[0])

    def convert_many(self, mavs, ledger: Optional[EnergyLedger] = None):
        """Walk the tree for each voltage; returns ``(codes, cycles)`` arrays.

        Out-of-range voltages are clamped to ``[0, v_max]`` and counted as
        warnings in the ledger.
        """
        v = np.asarray(mavs, dtype=float).reshape(-1)
        clipped = np.clip(v, 0.0, self.v_max)
        n_clamped = int(np.count_nonzero(clipped != v))
        codes, cycles = kernels.sar_walk(self.thresholds, self.lo, self.hi, self.codes, clipped)
        if ledger is not None:
            total = int(cycles.sum())
            ledger.add("adc_conversions", v.size)
            ledger.add("adc_compare_cycles", total)
            ledger.add("adc_dac_precharge_cycles", total)
            # the SA state machine steps once per decision
            ledger.add("sa_logic_asymmetric_ops" if self.mode == "asymmetric" else "sa_logic_symmetric_ops", total)
            ledger.add("adc_clamp_warnings", n_clamped)
            if self.degenerate:
                ledger.add("adc_degenerate_conversions", v.size)
        return codes, cycles

    def leaf_spans(self) -> list[tuple[float, float, int, int]]:
        """``(v_low, v_high, code, depth)`` for every leaf, ordered by voltage."""
        out = []

        def rec(i, a, b, d):
            if self.lo[i] < 0:
                out.append((a, b, int(self.codes[i]), d))
            else:
                rec(self.lo[i], a, float(self.thresholds[i]), d + 1)
                rec(self.hi[i], float(self.thresholds[i]), b, d + 1)

        rec(0, 0.0, self.v_max, 0)
        return out

    def expected_cycles(self, mavs) -> float:
        _, cycles = self.convert_many(mavs)
        return float(cycles.mean()) if cycles.size else 0.0

    # -- persistence ---------------------------------------------------
    def to_dict(self) -> dict:
        nodes = []
        for i in range(self.n_nodes):
            if self.lo[i] < 0:
                nodes.append({"id": i, "code": int(self.codes[i])})
            else:
                nodes.append({"id": i, "threshold": float(self.thresholds[i]),
                              "lo": int(self.lo[i]), "hi": int(self.hi[i])})
        return {"mode": self.mode, "adc_bits": self.adc_bits, "v_max": self.v_max,
                "degenerate": self.degenerate, "nodes": nodes}

    @classmethod
    def from_dict(cls, d: dict) -> "SarTree":
        nodes = sorted(d["nodes"], key=lambda n: n["id"])
        n = len(nodes)
        if [nd["id"] for nd in nodes] != list(range(n)):
            raise ValueError("tree node ids must be 0..N-1")
        thr = np.zeros(n)
        lo = np.full(n, -1, dtype=np.int64)
        hi = np.full(n, -1, dtype=np.int64)
        codes = np.full(n, -1, dtype=np.int64)
        for nd in nodes:
            i = nd["id"]
            if "code" in nd:
                codes[i] = int(nd["code"])
            else:
                thr[i] = float(nd["threshold"])
                lo[i] = int(nd["lo"])
                hi[i] = int(nd["hi"])
        return cls(d["mode"], int(d["adc_bits"]), float(d["v_max"]), thr, lo, hi, codes,
                   bool(d.get("degenerate", False)))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "SarTree":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


class _TreeBuilder:
    def __init__(self):
        self.thr: list[float] = []
        self.lo: list[int] = []
        self.hi: list[int] = []
        self.codes: list[int] = []

    def new(self) -> int:
        self.thr.append(0.0)
        self.lo.append(-1)
        self.hi.append(-1)
        self.codes.append(-1)
        return len(self.lo) - 1

    def finish(self, mode, adc_bits, v_max, degenerate=False) -> SarTree:
        return SarTree(mode, adc_bits, float(v_max), np.array(self.thr, dtype=float),
                       np.array(self.lo, dtype=np.int64), np.array(self.hi, dtype=np.int64),
                       np.array(self.codes, dtype=np.int64), degenerate)


def build_symmetric(adc_bits: int, v_max: float) -> SarTree:
    if adc_bits < 1:
        raise ValueError("adc_bits must be >= 1")
    if not v_max > 0:
        raise ValueError("v_max must be positive")
    lsb = v_max / (1 << adc_bits)
    b = _TreeBuilder()

    def rec(lo_cell, hi_cell):
        node = b.new()
        if hi_cell - lo_cell == 1:
            b.codes[node] = lo_cell
            return node
        mid = (lo_cell + hi_cell) // 2
        b.thr[node] = mid * lsb
        left = rec(lo_cell, mid)
        right = rec(mid, hi_cell)
        b.lo[node], b.hi[node] = left, right
        return node

    rec(0, 1 << adc_bits)
    return b.finish("symmetric", adc_bits, v_max)


def _levels_needed(cells: int) -> int:
    # splits required to bring a segment down to leaves of <= 2 cells
    return 0 if cells <= 2 else math.ceil(math.log2(cells / 2))


def build_asymmetric(mav_samples, adc_bits: int, v_max: float, max_depth: Optional[int] = None,
                     merge_tol: float = 0.0) -> SarTree:
    """Statistics-driven tree over the uniform code grid.

    Each reference is the grid boundary that best halves the sample mass of
    the segment it governs (zero-mass segments split at the voltage midpoint).
    Two adjacent cells may share a leaf, labelled with the code nearest their
    mass centroid, when the rarer of the two holds at most ``merge_tol`` of
    all samples. With the default of 0 only cells never seen during
    calibration are merged, so every observed code is resolved exactly and
    any other voltage is off by at most one LSB. A merge saves a decision but
    its error is permanent in differential flows, where converted deltas
    accumulate. ``merge_tol=1`` merges every pair. No path exceeds
    ``max_depth`` (default ``adc_bits + 2``).
    """
    if adc_bits < 1:
        raise ValueError("adc_bits must be >= 1")
    samples = np.asarray(mav_samples, dtype=float).reshape(-1)
    if samples.size == 0:
        raise ValueError("asymmetric tree needs a non-empty MAV histogram")
    ncell = 1 << adc_bits
    lsb = v_max / ncell
    mass = histogram(samples, adc_bits, v_max).astype(float)
    cum = np.concatenate([[0.0], np.cumsum(mass)])
    cap = adc_bits + 2 if max_depth is None else int(max_depth)
    tol = merge_tol * samples.size
    if not 0.0 <= merge_tol <= 1.0:
        raise ValueError("merge_tol must lie in [0, 1]")
    if cap < _levels_needed(ncell):
        raise ValueError("max_depth too small to resolve the grid to 2-cell leaves")

    b = _TreeBuilder()
    occupied = np.flatnonzero(mass)
    if occupied.size == 1:
        node = b.new()
        b.codes[node] = int(occupied[0])
        return b.finish("asymmetric", adc_bits, v_max, degenerate=True)

    def leaf_code(lo_cell, hi_cell):
        m = mass[lo_cell:hi_cell]
        if m.sum() == 0:
            return lo_cell + (hi_cell - lo_cell - 1) // 2
        centroid = float(np.dot(m, np.arange(lo_cell, hi_cell)) / m.sum())
        return int(min(max(math.floor(centroid + 0.5), lo_cell), hi_cell - 1))

    def rec(lo_cell, hi_cell, depth):
        node = b.new()
        cells = hi_cell - lo_cell
        if cells == 1 or cells == 2 and (depth >= cap or mass[lo_cell:hi_cell].min() <= tol):
            b.codes[node] = leaf_code(lo_cell, hi_cell)
            return node
        budget = cap - depth - 1
        cands = [s for s in range(lo_cell + 1, hi_cell)
                 if _levels_needed(s - lo_cell) <= budget and _levels_needed(hi_cell - s) <= budget]
        seg_mass = cum[hi_cell] - cum[lo_cell]
        mid = (lo_cell + hi_cell) / 2
        if seg_mass == 0:
            split = min(cands, key=lambda s: (abs(s - mid), s))
        else:
            split = min(cands, key=lambda s: (abs((cum[s] - cum[lo_cell]) - (cum[hi_cell] - cum[s])),
                                              abs(s - mid), s))
        b.thr[node] = split * lsb
        left = rec(lo_cell, split, depth + 1)
        right = rec(split, hi_cell, depth + 1)
        b.lo[node], b.hi[node] = left, right
        return node

    rec(0, ncell, 0)
    return b.finish("asymmetric", adc_bits, v_max)


class IdealAdc:
    """Non-quantizing converter: recovers the exact discharge count."""

    def digitize(self, mavs, den: int, vdd: float, ledger: Optional[EnergyLedger] = None) -> np.ndarray:
        v = np.asarray(mavs, dtype=float)
        if den == 0:
            return np.zeros(v.shape, dtype=np.int64)
        return np.rint((vdd - v) * den / vdd).astype(np.int64)


class SarAdc:
    """Tree-walking converter plus the code-to-count decode table."""

    def __init__(self, tree: SarTree):
        self.tree = tree
        self._decode: dict[tuple[int, float], np.ndarray] = {}

    def decode_table(self, den: int, vdd: float) -> np.ndarray:
        key = (den, vdd)
        table = self._decode.get(key)
        if table is None:
            ncell = 1 << self.tree.adc_bits
            counts = np.arange(den + 1)
            codes = grid_code(vdd - (vdd / den) * counts, self.tree.adc_bits, self.tree.v_max)
            table = np.empty(ncell, dtype=np.int64)
            populated = np.unique(codes)
            for c in range(ncell):
                if c in populated:
                    table[c] = int(np.rint(counts[codes == c].mean()))
                else:
                    near = populated[np.argmin(np.abs(populated - c))]
                    table[c] = int(np.rint(counts[codes == near].mean()))
            self._decode[key] = table
        return table

    def digitize(self, mavs, den: int, vdd: float, ledger: Optional[EnergyLedger] = None) -> np.ndarray:
        v = np.asarray(mavs, dtype=float)
        codes, _ = self.tree.convert_many(v, ledger)
        if den == 0:
            return np.zeros(v.shape, dtype=np.int64)
        return self.decode_table(den, vdd)[codes].reshape(v.shape)


class MavRecorder:
    """Wraps a converter and keeps every voltage it is asked to digitize."""

    def __init__(self, inner=None):
        self.inner = inner if inner is not None else IdealAdc()
        self.samples: list[np.ndarray] = []

    def digitize(self, mavs, den, vdd, ledger=None):
        self.samples.append(np.asarray(mavs, dtype=float).reshape(-1).copy())
        return self.inner.digitize(mavs, den, vdd, ledger)

    def values(self) -> np.ndarray:
        return np.concatenate(self.samples) if self.samples else np.empty(0)


def write_histogram_csv(path, mavs, adc_bits: int, v_max: float) -> None:
    counts = histogram(mavs, adc_bits, v_max)
    lsb = v_max / (1 << adc_bits)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["code", "v_low", "v_high", "count"])
        for c, n in enumerate(counts.tolist()):
            w.writerow([c, f"{c * lsb:.9f}", f"{(c + 1) * lsb:.9f}", n])
