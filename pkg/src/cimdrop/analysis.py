"""Uncertainty metrics and energy breakdowns."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from .ledger import ADC_COUNTERS, COUNTERS, EnergyConstants, EnergyLedger

__all__ = [
    "normalized_entropy",
    "pearson",
    "spearman",
    "UncertaintyReport",
    "uncertainty_report",
    "EnergyReport",
    "energy_report",
    "MetricError",
]


class MetricError(ValueError):
    pass


def normalized_entropy(histogram, num_classes: Optional[int] = None) -> float:
    """``-sum p log p / log K`` over vote frequencies, with ``0 log 0 = 0``."""
    h = np.asarray(histogram, dtype=float).reshape(-1)
    k = h.size if num_classes is None else int(num_classes)
    if k < 2:
        raise MetricError("normalized entropy needs at least two classes")
    if h.size > k:
        raise MetricError(f"histogram has {h.size} bins for {k} classes")
    if np.any(h < 0):
        raise MetricError("class counts must be non-negative")
    total = h.sum()
    if total <= 0:
        raise MetricError("histogram is empty")
    p = h[h > 0] / total
    H = float(-(p * np.log(p)).sum() / math.log(k))
    return min(max(0.0, H), 1.0)


def pearson(errors, variances) -> float:
    """Sample Pearson correlation; a constant series raises instead of giving NaN."""
    a = np.asarray(errors, dtype=float).reshape(-1)
    b = np.asarray(variances, dtype=float).reshape(-1)
    if a.size != b.size:
        raise MetricError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 2:
        raise MetricError("pearson needs at least two pairs")
    da = a - a.mean()
    db = b - b.mean()
    sa = math.sqrt(float(np.dot(da, da)))
    sb = math.sqrt(float(np.dot(db, db)))
    if sa == 0 or sb == 0:
        raise MetricError("correlation undefined for a constant series")
    return max(-1.0, min(1.0, float(np.dot(da, db)) / (sa * sb)))


def spearman(a, b) -> float:
    """Rank correlation (average ranks for ties)."""
    def ranks(v):
        v = np.asarray(v, dtype=float).reshape(-1)
        order = np.argsort(v, kind="mergesort")
        r = np.empty(v.size)
        r[order] = np.arange(v.size)
        for val in np.unique(v):
            idx = v == val
            r[idx] = r[idx].mean()
        return r
    return pearson(ranks(a), ranks(b))


@dataclass
class UncertaintyReport:
    class_histogram: np.ndarray
    normalized_entropy: float
    predictive_mean: np.ndarray
    predictive_variance: np.ndarray
    prediction: int
    pearson_r: Optional[float] = None

    def rows(self) -> list[tuple[str, str]]:
        out = [("prediction", str(self.prediction)), ("normalized_entropy", f"{self.normalized_entropy:.6f}")]
        out += [(f"votes_{i}", str(int(c))) for i, c in enumerate(self.class_histogram)]
        out += [(f"mean_{i}", f"{v:.9g}") for i, v in enumerate(self.predictive_mean)]
        out += [(f"variance_{i}", f"{v:.9g}") for i, v in enumerate(self.predictive_variance)]
        if self.pearson_r is not None:
            out.append(("pearson_r", f"{self.pearson_r:.6f}"))
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["metric", "value"])
            w.writerows(self.rows())


def uncertainty_report(outputs, num_classes: Optional[int] = None, pearson_r: Optional[float] = None
                       ) -> UncertaintyReport:
    """Summaries of a ``(T, classes)`` matrix of per-iteration outputs.

    Each iteration votes for its arg-max (lowest index on ties); the
    prediction is the majority vote, again breaking ties toward the lowest
    class index.
    """
    out = np.asarray(outputs, dtype=float)
    if out.ndim != 2 or out.shape[0] == 0:
        raise MetricError("outputs must be a non-empty (T, classes) matrix")
    k = out.shape[1] if num_classes is None else num_classes
    hist = np.bincount(np.argmax(out, axis=1), minlength=k)
    H = normalized_entropy(hist, k) if k >= 2 else 0.0
    return UncertaintyReport(hist, H, out.mean(axis=0), out.var(axis=0), int(np.argmax(hist)), pearson_r)


@dataclass
class EnergyReport:
    """Per-primitive energy (fJ) for one or more named runs."""

    energies: dict[str, dict[str, float]]
    ledgers: dict[str, EnergyLedger]

    def total(self, run: str) -> float:
        return sum(self.energies[run].values())

    def share(self, run: str, primitive: str) -> float:
        t = self.total(run)
        return self.energies[run][primitive] / t if t > 0 else 0.0

    def adc_share(self, run: str) -> float:
        t = self.total(run)
        return sum(self.energies[run][k] for k in ADC_COUNTERS) / t if t > 0 else 0.0

    def ratio(self, run: str, baseline: str) -> float:
        b = self.total(baseline)
        if b == 0:
            raise MetricError(f"baseline run {baseline!r} has zero energy")
        return self.total(run) / b

    def rows(self) -> list[list[str]]:
        runs = list(self.energies)
        out = []
        for run in runs:
            for prim in COUNTERS:
                e = self.energies[run][prim]
                out.append([run, prim, str(_count(self.ledgers[run], prim)), f"{e:.3f}",
                            f"{100 * self.share(run, prim):.1f}"])
            out.append([run, "adc_total", "", f"{sum(self.energies[run][k] for k in ADC_COUNTERS):.3f}",
                        f"{100 * self.adc_share(run):.1f}"])
            out.append([run, "total", "", f"{self.total(run):.3f}", "100.0"])
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["run", "primitive", "count", "energy_fj", "share_pct"])
            w.writerows(self.rows())

    def to_text(self) -> str:
        runs = list(self.energies)
        buf = io.StringIO()
        head = f"{'primitive':<26}" + "".join(f"{r:>22}" for r in runs)
        buf.write(head + "\n" + "-" * len(head) + "\n")
        for prim in COUNTERS + ("adc_total",):
            cells = []
            for r in runs:
                if prim == "adc_total":
                    e, s = sum(self.energies[r][k] for k in ADC_COUNTERS), self.adc_share(r)
                else:
                    e, s = self.energies[r][prim], self.share(r, prim)
                cells.append(f"{e / 1000:>12.3f} pJ {100 * s:>5.1f}%")
            buf.write(f"{prim:<26}" + "".join(f"{c:>22}" for c in cells) + "\n")
        buf.write(f"{'total':<26}" + "".join(f"{self.total(r) / 1000:>15.3f} pJ   " for r in runs) + "\n")
        if len(runs) > 1:
            base = runs[0]
            buf.write(f"{'ratio to ' + base:<26}" + "".join(f"{self.ratio(r, base):>19.3f}   " for r in runs) + "\n")
        return buf.getvalue()


def _count(ledger: EnergyLedger, prim: str) -> int:
    return ledger.sa_logic_ops if prim == "sa_logic_ops" else getattr(ledger, prim)


def energy_report(ledgers, constants=None) -> EnergyReport:
    """Price one ledger or a ``{run_name: ledger}`` mapping.

    ``constants`` is an :class:`EnergyConstants` or a plain mapping; a mapping
    that lacks entries is refused with the names of the missing constants.
    """
    if isinstance(ledgers, EnergyLedger):
        ledgers = {"run": ledgers}
    if constants is None:
        constants = EnergyConstants()
    elif isinstance(constants, Mapping):
        constants = EnergyConstants.from_dict(constants)
    return EnergyReport({k: constants.price(v) for k, v in ledgers.items()}, dict(ledgers))
