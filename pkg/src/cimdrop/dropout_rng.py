"""Behavioral model of the array-embedded cross-coupled-inverter dropout RNG.

Each end of the inverter pair is discharged by the summed write-port leakage
of the SRAM columns attached to it. The side that leaks faster wins, with a
zero-mean Gaussian noise term standing in for the summed port noise::

    bit = 1  iff  sum(leak[left]) - sum(leak[right]) + N(0, noise_sigma) < 0

Calibration moves columns between the two ends until the empirical bias meets
the target. A second, purely statistical model (:class:`BiasPerturbation`)
draws an instance bias from a Beta distribution for system-level studies.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "RngInstance",
    "make_instance",
    "next_bit",
    "next_bits",
    "estimate_p1",
    "calibrate",
    "CalibrationResult",
    "BiasPerturbation",
    "perturbed_stream",
    "bank_size",
    "RngBank",
    "write_calibration_csv",
]

LEFT, RIGHT = 0, 1

DEFAULT_COLUMNS = 64
DEFAULT_SIGMA_MISMATCH = 0.3
DEFAULT_NOISE_SIGMA = 12.0
DEFAULT_ESTIMATE_BITS = 500


@dataclass
class RngInstance:
    leakage: np.ndarray
    side: np.ndarray  # LEFT/RIGHT per column
    noise_sigma: float
    target_p1: float = 0.5
    seed: int = 0
    calibrated: bool = False
    calibration_steps: int = 0
    _gen: np.random.Generator = field(default=None, repr=False)

    def __post_init__(self):
        self.leakage = np.asarray(self.leakage, dtype=float)
        self.side = np.asarray(self.side, dtype=np.int8)
        if np.any(self.leakage <= 0):
            raise ValueError("column leakage must be positive")
        if self.side.shape != self.leakage.shape:
            raise ValueError("side assignment must cover every column")
        if self._gen is None:
            # bit noise uses its own stream so mismatch draws stay fixed per seed
            self._gen = np.random.default_rng([self.seed, 1])

    @property
    def total_columns(self) -> int:
        return self.leakage.size

    @property
    def left_columns(self) -> np.ndarray:
        return np.flatnonzero(self.side == LEFT)

    @property
    def right_columns(self) -> np.ndarray:
        return np.flatnonzero(self.side == RIGHT)

    def imbalance(self) -> float:
        return float(self.leakage[self.side == LEFT].sum() - self.leakage[self.side == RIGHT].sum())

    def true_p1(self) -> float:
        """Exact bias implied by the current split."""
        if self.noise_sigma == 0:
            return 1.0 if self.imbalance() < 0 else 0.0
        return 0.5 * math.erfc(self.imbalance() / (self.noise_sigma * math.sqrt(2)))


def make_instance(seed: int, total_columns: int = DEFAULT_COLUMNS, sigma_mismatch: float = DEFAULT_SIGMA_MISMATCH,
                  noise_sigma: float = DEFAULT_NOISE_SIGMA, split: str = "random",
                  target_p1: float = 0.5) -> RngInstance:
    """Draw per-column leakage (lognormal, unit median) and an initial split.

    ``split="random"`` flips a fair coin per column (the fixed, uncalibrated
    baseline); ``"balanced"`` alternates sides.
    """
    if total_columns < 2:
        raise ValueError("need at least two columns")
    g = np.random.default_rng([seed, 0])
    leak = g.lognormal(0.0, sigma_mismatch, total_columns)
    if split == "random":
        side = g.integers(0, 2, total_columns)
    elif split == "balanced":
        side = np.arange(total_columns) % 2
    else:
        raise ValueError(f"unknown split {split!r}")
    return RngInstance(leak, side, noise_sigma, target_p1, seed)


def next_bits(rng: RngInstance, count: int) -> np.ndarray:
    noise = rng._gen.normal(0.0, 1.0, count) * rng.noise_sigma
    return ((rng.imbalance() + noise) < 0).astype(np.uint8)


def next_bit(rng: RngInstance) -> int:
    return int(next_bits(rng, 1)[0])


def estimate_p1(rng: RngInstance, evaluations: int = DEFAULT_ESTIMATE_BITS) -> float:
    return float(next_bits(rng, evaluations).mean())


@dataclass
class CalibrationResult:
    instance: RngInstance
    steps: int
    p1_estimate: float
    converged: bool


def calibrate(rng: RngInstance, target_p1: float, tolerance: float = 0.02, batch: int = DEFAULT_ESTIMATE_BITS,
              max_steps: Optional[int] = None) -> CalibrationResult:
    """Greedy column reallocation toward ``target_p1``.

    Every step tries moving one column from the end that is winning too often
    to the other end and re-estimates the bias from ``batch`` bits; a move is
    kept only if the estimate gets closer to the target. Stops within
    ``tolerance``, when no single move helps, or after ``max_steps`` trials
    (default ``4 * total_columns``). The instance is modified in place.
    """
    if not 0 < target_p1 < 1:
        raise ValueError("target_p1 must lie in (0, 1)")
    if batch < 100:
        raise ValueError("batch must be >= 100 evaluations")
    max_steps = 4 * rng.total_columns if max_steps is None else int(max_steps)
    order = np.random.default_rng([rng.seed, 2]).permutation(rng.total_columns)
    est = estimate_p1(rng, batch)
    err = abs(est - target_p1)
    steps = 0
    tried: set[int] = set()
    while err > tolerance and steps < max_steps:
        # too many ones -> right end leaks too much -> move a right column left
        src = RIGHT if est > target_p1 else LEFT
        cands = [int(c) for c in order if rng.side[c] == src and int(c) not in tried]
        if not cands:
            break
        moved = False
        for c in cands:
            if steps >= max_steps:
                break
            steps += 1
            rng.side[c] = 1 - src
            new_est = estimate_p1(rng, batch)
            new_err = abs(new_est - target_p1)
            if new_err < err:
                est, err = new_est, new_err
                tried.clear()
                moved = True
                break
            rng.side[c] = src
            tried.add(c)
        if not moved:
            break
    rng.target_p1 = target_p1
    rng.calibrated = True
    rng.calibration_steps = steps
    return CalibrationResult(rng, steps, est, err <= tolerance)


@dataclass(frozen=True)
class BiasPerturbation:
    """Symmetric ``Beta(a, a)`` bias model; ``a=None`` or ``inf`` means no perturbation."""

    a: Optional[float]
    seed: int = 0

    def __post_init__(self):
        if self.a is not None and not self.a > 0:
            raise ValueError("Beta shape parameter must be positive")

    def draw_bias(self, generator: np.random.Generator, mean: float = 0.5) -> float:
        """One instance bias with the given mean (``Beta(2a*mean, 2a*(1-mean))``)."""
        if self.a is None or math.isinf(self.a) or mean in (0.0, 1.0):
            return mean
        return float(generator.beta(2 * self.a * mean, 2 * self.a * (1 - mean)))


def perturbed_stream(pert: BiasPerturbation, length: int) -> np.ndarray:
    g = np.random.default_rng(pert.seed)
    p = pert.draw_bias(g)
    return (g.random(length) < p).astype(np.uint8)


def bank_size(array_cols: int, n: int) -> int:
    """Generators needed so mask bits keep pace with ``2(n-1)``-clock correlations."""
    return -(-array_cols // (2 * (n - 1)))


class RngBank:
    """Parallel bit sources for one macro; bit ``j`` of a frame comes from
    source ``j mod size``.

    Sources are either calibrated :class:`RngInstance` objects (embedded mode)
    or per-source Bernoulli biases drawn from a :class:`BiasPerturbation`.
    """

    def __init__(self, size: int, p1: float, seed: int = 0, perturbation: Optional[BiasPerturbation] = None,
                 embedded: bool = False, tolerance: float = 0.02, **instance_kw):
        if size < 1:
            raise ValueError("bank needs at least one source")
        self.size = size
        self.p1 = p1
        self.seed = seed
        self.embedded = embedded
        self.instances: list[RngInstance] = []
        self.calibrations: list[CalibrationResult] = []
        self._gen = np.random.default_rng([seed, 3])
        if embedded:
            for i in range(size):
                inst = make_instance(seed + i, **instance_kw)
                if 0 < p1 < 1:
                    self.calibrations.append(calibrate(inst, p1, tolerance))
                self.instances.append(inst)
            self.biases = np.array([inst.true_p1() for inst in self.instances])
        else:
            pert = perturbation if perturbation is not None else BiasPerturbation(None, seed)
            g = np.random.default_rng([pert.seed, 4])
            self.biases = np.array([pert.draw_bias(g, p1) for _ in range(size)])

    def reseed(self, stream: int) -> "RngBank":
        """Restart every bit stream on a derived seed; biases and splits are kept.

        Lets independent tasks draw from the same physical bank without
        sharing generator state.
        """
        self._gen = np.random.default_rng([self.seed, 3, stream])
        for i, inst in enumerate(self.instances):
            inst._gen = np.random.default_rng([inst.seed, 1, stream])
        return self

    def frame(self, nbits: int) -> np.ndarray:
        src = np.arange(nbits) % self.size
        if self.embedded:
            out = np.empty(nbits, dtype=np.uint8)
            for i, inst in enumerate(self.instances):
                idx = np.flatnonzero(src == i)
                out[idx] = next_bits(inst, idx.size)
            return out
        return (self._gen.random(nbits) < self.biases[src]).astype(np.uint8)

    def assert_ready(self, nbits: int, frame_cycles: int) -> None:
        """Pipelining contract: next frame's bits fit in this frame's clocks."""
        if self.size * frame_cycles < nbits:
            raise RuntimeError(f"dropout mask not ready: {nbits} bits needed, "
                               f"{self.size * frame_cycles} producible in {frame_cycles} cycles")


def write_calibration_csv(path, results: list[CalibrationResult]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["instance", "steps", "p1_estimate", "converged", "left_columns", "right_columns"])
        for i, r in enumerate(results):
            w.writerow([i, r.steps, f"{r.p1_estimate:.4f}", int(r.converged),
                        " ".join(map(str, r.instance.left_columns.tolist())),
                        " ".join(map(str, r.instance.right_columns.tolist()))])
