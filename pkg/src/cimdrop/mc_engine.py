"""Monte-Carlo-Dropout iteration engine.

Two execution flows share the same array kernel:

* dense ("typical"): every iteration evaluates the full layer with dropped
  inputs gated to zero;
* reuse: iteration ``i`` starts from the previous product-sums and only
  processes columns whose state changed, adding newly active columns in a
  first pass and subtracting newly dropped ones in a second pass.

Ordering the masks so consecutive iterations differ in few positions shrinks
the reuse workload further; that is an open-path travelling-salesman problem
over Hamming distances.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .dropout_rng import BiasPerturbation, RngBank, bank_size
from .fixedpoint import QuantMatrix, QuantVector
from .ledger import EnergyLedger
from .macro import MacroBank
from .mf_op import build_schedule, conventional_correlate, correlate

__all__ = [
    "DropoutMask",
    "DropoutSchedule",
    "McResult",
    "sample_schedule",
    "distance_matrix",
    "path_cost",
    "order_schedule",
    "brute_force_order",
    "save_schedule",
    "load_schedule",
    "run_dense",
    "run_reuse",
    "reuse_mac_count",
    "ScheduleError",
]

SCHEDULE_VERSION = 1
SOLVERS = ("nearest_neighbor", "two_opt", "exact_dp")
EXACT_DP_MAX_T = 15


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class DropoutMask:
    input_bits: np.ndarray
    output_bits: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "input_bits", np.asarray(self.input_bits, dtype=np.uint8).reshape(-1))
        object.__setattr__(self, "output_bits", np.asarray(self.output_bits, dtype=np.uint8).reshape(-1))

    def concat(self) -> np.ndarray:
        return np.concatenate([self.input_bits, self.output_bits])

    def __eq__(self, other):
        if not isinstance(other, DropoutMask):
            return NotImplemented
        return np.array_equal(self.input_bits, other.input_bits) and np.array_equal(self.output_bits,
                                                                                     other.output_bits)

    __hash__ = None


@dataclass
class DropoutSchedule:
    masks: list[DropoutMask]
    p_drop: float = 0.5
    seed: int = 0
    solver: str = "none"
    source: str = "ideal"
    ordering: Optional[np.ndarray] = None
    _dist: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not self.masks:
            raise ScheduleError("schedule needs at least one mask")
        fi, fo = self.masks[0].input_bits.size, self.masks[0].output_bits.size
        for m in self.masks:
            if m.input_bits.size != fi or m.output_bits.size != fo:
                raise ScheduleError("all masks in a schedule must share dimensions")
        if self.ordering is None:
            self.ordering = np.arange(len(self.masks))
        self.ordering = np.asarray(self.ordering, dtype=np.int64)
        if sorted(self.ordering.tolist()) != list(range(len(self.masks))):
            raise ScheduleError("ordering must be a permutation of 0..T-1")

    @property
    def T(self) -> int:
        return len(self.masks)

    @property
    def fan_in(self) -> int:
        return self.masks[0].input_bits.size

    @property
    def fan_out(self) -> int:
        return self.masks[0].output_bits.size

    def input_matrix(self) -> np.ndarray:
        return np.stack([m.input_bits for m in self.masks])

    def output_matrix(self) -> np.ndarray:
        return np.stack([m.output_bits for m in self.masks])

    @property
    def distance_matrix(self) -> np.ndarray:
        if self._dist is None:
            self._dist = distance_matrix(self.masks)
        return self._dist

    def cost(self) -> int:
        """Sum of Hamming distances between consecutive masks."""
        return path_cost(self.distance_matrix, np.arange(self.T))

    def random_bits_per_mask(self) -> int:
        """Bits that must be generated (or read back) per iteration."""
        inm, outm = self.input_matrix(), self.output_matrix()
        # a dimension whose masks are all ones was not dropout-gated
        return int((0 if inm.all() else self.fan_in) + (0 if outm.all() else self.fan_out))


def sample_schedule(source, T: int, fan_in: int, fan_out: int, p_drop: float = 0.5, dropout_in: bool = True,
                    dropout_out: bool = False, seed: int = 0) -> DropoutSchedule:
    """Draw ``T`` masks; bit 0 means dropped.

    ``source`` is a seed/``numpy.random.Generator`` (ideal Bernoulli bits), a
    :class:`BiasPerturbation` (per-source Beta-distributed bias), or an
    :class:`RngBank` (embedded generator model).
    """
    if not 0 <= p_drop < 1:
        raise ValueError("p_drop must lie in [0, 1)")
    if T < 1:
        raise ValueError("T must be >= 1")
    nbits = (fan_in if dropout_in else 0) + (fan_out if dropout_out else 0)
    if isinstance(source, RngBank):
        kind = "embedded" if source.embedded else "beta"
        draw = source.frame
    elif isinstance(source, BiasPerturbation):
        kind = "beta"
        bank = RngBank(max(1, nbits), 1 - p_drop, seed=source.seed, perturbation=source)
        draw = bank.frame
    else:
        kind = "ideal"
        g = source if isinstance(source, np.random.Generator) else np.random.default_rng(source)
        draw = lambda k: (g.random(k) >= p_drop).astype(np.uint8)
    masks = []
    for _ in range(T):
        bits = draw(nbits) if p_drop > 0 else np.ones(nbits, dtype=np.uint8)
        i_bits = bits[:fan_in] if dropout_in else np.ones(fan_in, dtype=np.uint8)
        o_bits = bits[nbits - fan_out:] if dropout_out else np.ones(fan_out, dtype=np.uint8)
        masks.append(DropoutMask(i_bits, o_bits))
    return DropoutSchedule(masks, p_drop=p_drop, seed=seed, source=kind)


# -- ordering ------------------------------------------------------------

def distance_matrix(masks: Sequence[DropoutMask]) -> np.ndarray:
    bits = np.stack([m.concat() for m in masks]).astype(np.int64)
    return (bits[:, None, :] != bits[None, :, :]).sum(axis=2).astype(np.int64)


def path_cost(dist, order) -> int:
    o = np.asarray(order, dtype=np.int64)
    if o.size < 2:
        return 0
    return int(np.asarray(dist)[o[:-1], o[1:]].sum())


def brute_force_order(dist) -> tuple[int, np.ndarray]:
    """Minimum open-path cost by enumerating all permutations (T <= 9)."""
    from itertools import permutations

    d = np.asarray(dist, dtype=np.int64)
    n = d.shape[0]
    if n > 9:
        raise ValueError("brute force limited to T <= 9")
    if n == 1:
        return 0, np.zeros(1, dtype=np.int64)
    perms = np.array(list(permutations(range(n))), dtype=np.int64)
    costs = d[perms[:, :-1], perms[:, 1:]].sum(axis=1)
    best = int(np.argmin(costs))
    return int(costs[best]), perms[best]


def _nearest_neighbor_best(dist) -> np.ndarray:
    best_cost, best = None, None
    for s in range(dist.shape[0]):
        o = kernels.nearest_neighbor_path(dist, s)
        c = path_cost(dist, o)
        if best_cost is None or c < best_cost:
            best_cost, best = c, o
    return best


def solve_order(dist, solver: str = "two_opt", max_evals: Optional[int] = None) -> np.ndarray:
    d = np.ascontiguousarray(dist, dtype=np.int64)
    n = d.shape[0]
    if solver not in SOLVERS:
        raise ScheduleError(f"unknown solver {solver!r}; expected one of {SOLVERS}")
    if n < 2:
        raise ScheduleError("ordering needs T >= 2")
    if solver == "exact_dp":
        if n > EXACT_DP_MAX_T:
            raise ScheduleError(f"exact_dp supports T <= {EXACT_DP_MAX_T}, got {n}")
        return kernels.held_karp_path(d)[1]
    order = _nearest_neighbor_best(d)
    if solver == "two_opt":
        budget = 10 * n * n if max_evals is None else int(max_evals)
        order, _ = kernels.two_opt_path(d, order, budget)
    return np.asarray(order, dtype=np.int64)


def order_schedule(schedule: DropoutSchedule, solver: str = "two_opt", max_evals: Optional[int] = None
                   ) -> DropoutSchedule:
    """Reorder masks to shorten the consecutive-Hamming path. Masks are untouched."""
    perm = solve_order(schedule.distance_matrix, solver, max_evals)
    dist = schedule.distance_matrix[np.ix_(perm, perm)]
    return DropoutSchedule([schedule.masks[i] for i in perm], p_drop=schedule.p_drop, seed=schedule.seed,
                           solver=solver, source=schedule.source, ordering=schedule.ordering[perm], _dist=dist)


# -- persistence -----------------------------------------------------------

def _bits_to_str(bits) -> str:
    # element 0 is written first (most significant character)
    return "".join("1" if b else "0" for b in np.asarray(bits).tolist())


def _str_to_bits(s: str) -> np.ndarray:
    if any(c not in "01" for c in s):
        raise ScheduleError(f"malformed bitstring {s!r}")
    return np.frombuffer(s.encode(), dtype=np.uint8) - ord("0")


def save_schedule(schedule: DropoutSchedule, path) -> None:
    doc = {
        "version": SCHEDULE_VERSION,
        "p_drop": schedule.p_drop,
        "seed": schedule.seed,
        "solver": schedule.solver,
        "ordering": schedule.ordering.tolist(),
        "masks": [{"in": _bits_to_str(m.input_bits), "out": _bits_to_str(m.output_bits)} for m in schedule.masks],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, separators=(",", ":"))


def load_schedule(path, fan_in: Optional[int] = None, fan_out: Optional[int] = None) -> DropoutSchedule:
    """Read a stored schedule; runs driven by it read bits instead of using the RNG bank."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise ScheduleError(f"schedule file is not valid JSON: {e}") from e
    for key in ("version", "p_drop", "seed", "solver", "masks"):
        if key not in doc:
            raise ScheduleError(f"schedule file missing field {key!r}")
    if doc["version"] != SCHEDULE_VERSION:
        raise ScheduleError(f"unsupported schedule version {doc['version']}")
    try:
        masks = [DropoutMask(_str_to_bits(m["in"]), _str_to_bits(m["out"])) for m in doc["masks"]]
    except (KeyError, TypeError) as e:
        raise ScheduleError("each mask needs 'in' and 'out' bitstrings") from e
    sched = DropoutSchedule(masks, p_drop=float(doc["p_drop"]), seed=int(doc["seed"]), solver=str(doc["solver"]),
                            source="file", ordering=doc.get("ordering"))
    if fan_in is not None and sched.fan_in != fan_in:
        raise ScheduleError(f"schedule input width {sched.fan_in} != layer fan-in {fan_in}")
    if fan_out is not None and sched.fan_out != fan_out:
        raise ScheduleError(f"schedule output width {sched.fan_out} != layer fan-out {fan_out}")
    return sched


# -- execution -------------------------------------------------------------

@dataclass
class McResult:
    """Per-iteration results of one layer (or network) run.

    ``partials`` holds the integer ``(xw, wx)`` sums, shape ``(T, 2, fan_out)``;
    ``per_iteration_outputs`` the scaled real outputs, shape ``(T, fan_out)``.
    """

    partials: np.ndarray
    per_iteration_outputs: np.ndarray
    mac_count_dense: int
    mac_count_reuse: int
    mac_count: int
    cycles: int
    ledger: EnergyLedger
    mode: str
    layers: list = field(default_factory=list, repr=False)
    activation_clamps: int = 0
    banks: list = field(default_factory=list, repr=False)

    @property
    def T(self) -> int:
        return self.per_iteration_outputs.shape[0]

    def mean(self) -> np.ndarray:
        return self.per_iteration_outputs.mean(axis=0)

    def variance(self) -> np.ndarray:
        return self.per_iteration_outputs.var(axis=0)

    def votes(self) -> np.ndarray:
        """Winning class per iteration; ties go to the lowest index."""
        return np.argmax(self.per_iteration_outputs, axis=1)

    def class_histogram(self, num_classes: Optional[int] = None) -> np.ndarray:
        k = self.per_iteration_outputs.shape[1] if num_classes is None else num_classes
        return np.bincount(self.votes(), minlength=k)

    def vote(self) -> int:
        return int(np.argmax(self.class_histogram()))

    @property
    def prediction(self):
        return self.mean()


def _inputs_per_iteration(x, T: int) -> list[QuantVector]:
    if isinstance(x, QuantVector):
        return [x] * T
    xs = list(x)
    if len(xs) != T:
        raise ValueError(f"{len(xs)} input vectors for {T} iterations")
    return xs


def _check_dims(schedule: DropoutSchedule, W: QuantMatrix, bank: MacroBank):
    fan_out, fan_in = W.shape
    if schedule.fan_in != fan_in or schedule.fan_out != fan_out:
        raise ValueError(f"schedule dims ({schedule.fan_in}->{schedule.fan_out}) do not match layer "
                         f"({fan_in}->{fan_out})")
    if bank.shape != W.shape:
        raise ValueError("macro bank does not match layer shape")


def _charge_mask_bits(schedule: DropoutSchedule, bank: MacroBank, n: int):
    bits = schedule.random_bits_per_mask()
    if schedule.source == "file":
        bank.ledger.add("schedule_read_bits", bits)
    elif bits:
        bank.ledger.add("rng_bits", bits)
        if schedule.source == "embedded":
            cfg = bank.config
            gens = bank_size(cfg.cols, n) * bank.r_tiles * bank.c_tiles
            frame_cycles = min(cfg.rows, bank.shape[0]) * 2 * (n - 1)
            if gens * frame_cycles < bits:
                raise RuntimeError(f"dropout mask not ready: {bits} bits needed, "
                                   f"{gens * frame_cycles} producible per frame")


def _scaled(W: QuantMatrix, x: QuantVector, xw, wx, rescale: float) -> np.ndarray:
    return (W.scale * xw + x.scale * wx) * rescale


def run_dense(schedule: DropoutSchedule, W: QuantMatrix, x, bank: MacroBank, adc=None,
              rescale: float = 1.0, operator: str = "mf") -> McResult:
    """Typical flow: full layer per iteration, dropped inputs gated to zero.

    ``operator="conventional"`` evaluates ordinary dot products with the
    ``n * n`` plane-pair schedule instead of the multiplication-free operator;
    its integer result is stored in ``partials[:, 0]``.
    """
    if operator not in ("mf", "conventional"):
        raise ValueError(f"unknown operator {operator!r}")
    _check_dims(schedule, W, bank)
    T = schedule.T
    fan_out, fan_in = W.shape
    xs = _inputs_per_iteration(x, T)
    sched = build_schedule(W.precision_n)
    partials = np.zeros((T, 2, fan_out), dtype=np.int64)
    outputs = np.zeros((T, fan_out))
    start = bank.cycle_counter
    for i, m in enumerate(schedule.masks):
        _charge_mask_bits(schedule, bank, W.precision_n)
        active = np.flatnonzero(m.output_bits)
        gated = np.flatnonzero(m.output_bits == 0)
        keep = m.output_bits.astype(bool)
        if operator == "mf":
            xw, wx = correlate(W, xs[i], bank, adc, col_active=m.input_bits, rows=active, gated_rows=gated,
                               schedule=sched)
            real = _scaled(W, xs[i], xw, wx, rescale)
        else:
            xw = conventional_correlate(W, xs[i], bank, adc, col_active=m.input_bits, rows=active,
                                        gated_rows=gated)
            wx = np.zeros_like(xw)
            real = W.scale * xs[i].scale * xw * rescale
        partials[i, 0] = np.where(keep, xw, 0)
        partials[i, 1] = np.where(keep, wx, 0)
        outputs[i] = np.where(keep, real, 0.0)
        bank.ledger.add("mac_equivalents", fan_in * fan_out)
    macs = T * fan_in * fan_out
    return McResult(partials, outputs, macs, reuse_mac_count(schedule, xs), macs,
                    bank.cycle_counter - start, bank.ledger, "dense")


def _changed_columns(prev_on, cur_on, prev_x: QuantVector, cur_x: QuantVector) -> np.ndarray:
    same_value = (prev_x.signs == cur_x.signs) & (prev_x.magnitudes == cur_x.magnitudes)
    return (prev_on != cur_on) | (prev_on & cur_on & ~same_value)


def reuse_mac_count(schedule: DropoutSchedule, x) -> int:
    """MACs the reuse flow performs, counted without touching the array."""
    xs = _inputs_per_iteration(x, schedule.T)
    fan_in = schedule.fan_in
    total = 0
    prev_on = prev_x = valid = None
    for i, m in enumerate(schedule.masks):
        on = m.input_bits.astype(bool)
        out = m.output_bits.astype(bool)
        if i == 0:
            total += int(on.sum()) * int(out.sum())
        else:
            changed = _changed_columns(prev_on, on, prev_x, xs[i])
            delta = int((changed & on).sum() + (changed & prev_on).sum())
            total += delta * int((out & valid).sum()) + fan_in * int((out & ~valid).sum())
        prev_on, prev_x, valid = on, xs[i], out
    return total


def run_reuse(schedule: DropoutSchedule, W: QuantMatrix, x, bank: MacroBank, adc=None,
              rescale: float = 1.0) -> McResult:
    """Differential flow ``P_i = P_(i-1) + W x A_i - W x D_i``.

    ``A_i`` are columns active now but not before (or active in both with a
    changed input value), ``D_i`` the columns whose previous contribution must
    be removed. Rows re-enabled after being dropped are recomputed from scratch
    over the active columns, counted as ``fan_in`` MACs.
    """
    _check_dims(schedule, W, bank)
    T = schedule.T
    fan_out, fan_in = W.shape
    xs = _inputs_per_iteration(x, T)
    sched = build_schedule(W.precision_n)
    partials = np.zeros((T, 2, fan_out), dtype=np.int64)
    outputs = np.zeros((T, fan_out))
    P = np.zeros((2, fan_out), dtype=np.int64)
    start = bank.cycle_counter
    macs = 0
    prev_on = prev_x = valid = None
    for i, m in enumerate(schedule.masks):
        _charge_mask_bits(schedule, bank, W.precision_n)
        on = m.input_bits.astype(bool)
        out = m.output_bits.astype(bool)
        cur_x = xs[i]
        if i == 0:
            rows = np.flatnonzero(out)
            if rows.size and on.any():
                P[:] = correlate(W, cur_x, bank, adc, col_active=on, rows=rows, schedule=sched)
            step_macs = int(on.sum()) * rows.size
        else:
            changed = _changed_columns(prev_on, on, prev_x, cur_x)
            added = changed & on
            removed = changed & prev_on
            keep_rows = np.flatnonzero(out & valid)
            fresh_rows = np.flatnonzero(out & ~valid)
            if keep_rows.size and added.any():
                xw, wx = correlate(W, cur_x, bank, adc, col_active=added, rows=keep_rows, schedule=sched)
                P[0, keep_rows] += xw[keep_rows]
                P[1, keep_rows] += wx[keep_rows]
            if keep_rows.size and removed.any():
                xw, wx = correlate(W, prev_x, bank, adc, col_active=removed, rows=keep_rows, schedule=sched)
                P[0, keep_rows] -= xw[keep_rows]
                P[1, keep_rows] -= wx[keep_rows]
            if fresh_rows.size:
                P[:, fresh_rows] = 0
                if on.any():
                    xw, wx = correlate(W, cur_x, bank, adc, col_active=on, rows=fresh_rows, schedule=sched)
                    P[0, fresh_rows] = xw[fresh_rows]
                    P[1, fresh_rows] = wx[fresh_rows]
            step_macs = int(added.sum() + removed.sum()) * keep_rows.size + fan_in * fresh_rows.size
        macs += step_macs
        bank.ledger.add("mac_equivalents", step_macs)
        partials[i, 0] = np.where(out, P[0], 0)
        partials[i, 1] = np.where(out, P[1], 0)
        outputs[i] = np.where(out, _scaled(W, cur_x, P[0], P[1], rescale), 0.0)
        prev_on, prev_x, valid = on, cur_x, out
    return McResult(partials, outputs, T * fan_in * fan_out, macs, macs, bank.cycle_counter - start,
                    bank.ledger, "reuse")
