"""Reference workloads shared by the CLI, the benchmarks and the test-suite."""
from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Mapping, Optional

import numpy as np

from .fixedpoint import QuantMatrix, QuantVector, quantize, quantize_matrix, per_tensor_scale
from .ledger import EnergyLedger
from .macro import MacroBank, MacroConfig
from .mc_engine import DropoutSchedule, McResult, order_schedule, run_dense, run_reuse, sample_schedule
from .sar_adc import MavRecorder, SarAdc, build_asymmetric, build_symmetric

if TYPE_CHECKING:
    from .network import NetworkSpec

__all__ = [
    "MODES",
    "ModeRun",
    "calibrate_tree",
    "run_mode",
    "compare_modes",
    "single_layer_workload",
    "Workload",
    "InputRun",
    "build_workload",
    "schedule_source",
    "workload_schedules",
    "workload_adc",
    "warmup_mavs",
    "warmup_tree",
    "run_workload",
]

MODES = ("typical", "reuse", "reuse_ordered")


@dataclass
class ModeRun:
    mode: str
    result: McResult
    ledger: EnergyLedger
    schedule: DropoutSchedule


def single_layer_workload(seed: int = 0, shape=(16, 31), n: int = 6) -> tuple[QuantMatrix, QuantVector]:
    """Random Gaussian layer and input filling one macro."""
    g = np.random.default_rng([seed, 11])
    W = quantize_matrix(g.normal(size=shape), n)
    xv = g.normal(size=shape[1])
    return W, quantize(xv, n, per_tensor_scale(xv, n))


def calibrate_tree(mode: str, W: QuantMatrix, x: QuantVector, config: MacroConfig, adc_bits: int, p_drop: float,
                   T: int, seed: int, warmup_frames: int = 1):
    """Asymmetric tree fitted to voltages from warm-up passes of the same flow."""
    if warmup_frames < 1:
        raise ValueError("warmup_frames must be >= 1")
    rec = MavRecorder()
    fan_out, fan_in = W.shape
    for f in range(warmup_frames):
        sched = sample_schedule(np.random.default_rng([seed, 101, f]), T, fan_in, fan_out, p_drop)
        bank = MacroBank(config, W.shape)
        if mode == "typical":
            run_dense(sched, W, x, bank, rec)
        else:
            if mode == "reuse_ordered":
                sched = order_schedule(sched)
            run_reuse(sched, W, x, bank, rec)
    return build_asymmetric(rec.values(), adc_bits, config.vdd)


def run_mode(mode: str, schedule: DropoutSchedule, W: QuantMatrix, x: QuantVector, config: MacroConfig,
             adc_bits: int = 5, tree=None, solver: str = "two_opt") -> ModeRun:
    """One of the three compared execution configurations.

    * ``typical``: ordinary multibit dot products, symmetric converter, every
      iteration evaluated in full, masks from the on-line generator;
    * ``reuse``: multiplication-free operator, asymmetric converter,
      differential iterations, on-line masks;
    * ``reuse_ordered``: as ``reuse`` over a pre-ordered schedule that is read
      from storage instead of generated.
    """
    bank = MacroBank(config, W.shape)
    if mode == "typical":
        res = run_dense(schedule, W, x, bank, SarAdc(build_symmetric(adc_bits, config.vdd)), operator="conventional")
    elif mode in ("reuse", "reuse_ordered"):
        if tree is None:
            raise ValueError(f"mode {mode!r} needs a calibrated asymmetric tree")
        if mode == "reuse_ordered":
            schedule = order_schedule(schedule, solver)
            schedule.source = "file"
        res = run_reuse(schedule, W, x, bank, SarAdc(tree))
    else:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    return ModeRun(mode, res, bank.ledger, schedule)


def compare_modes(seed: int = 0, T: int = 30, p_drop: float = 0.5, shape=(16, 31), n: int = 6, adc_bits: int = 5,
                  config: Optional[MacroConfig] = None) -> dict[str, ModeRun]:
    """All three modes on the same layer, input and mask draw."""
    config = config if config is not None else MacroConfig()
    W, x = single_layer_workload(seed, shape, n)
    sched = sample_schedule(np.random.default_rng([seed, 7]), T, shape[1], shape[0], p_drop)
    out = {}
    for mode in MODES:
        tree = None if mode == "typical" else calibrate_tree(mode, W, x, config, adc_bits, p_drop, T, seed)
        out[mode] = run_mode(mode, sched, W, x, config, adc_bits, tree)
    return out


# -- config-driven network workloads ------------------------------------------

@dataclass
class Workload:
    net: "NetworkSpec"
    inputs: np.ndarray
    labels: Optional[np.ndarray] = None  # class labels or regression targets
    levels: Optional[np.ndarray] = None  # corruption level per input
    task: str = "classification"


@dataclass
class InputRun:
    index: int
    result: McResult


def build_workload(cfg: Mapping) -> Workload:
    """Network and inputs described by a resolved config."""
    from .network import load_inputs, load_network
    from .synthetic import heteroscedastic_regression, prototype_classifier, corrupted_inputs

    spec = cfg["network"]
    task_kind = "classification"
    reg = None
    proto = None
    if spec is None or isinstance(spec, Mapping):
        syn = dict(spec["synthetic"]) if isinstance(spec, Mapping) and isinstance(spec["synthetic"], Mapping) \
            else {"kind": spec["synthetic"] if isinstance(spec, Mapping) else "prototype"}
        kind = syn.pop("kind", "prototype")
        n = cfg["precision_n"] or 6
        if kind == "prototype":
            proto = prototype_classifier(precision_n=n, adc_bits=cfg["adc"]["bits"], **syn)
            net = proto.net
        elif kind == "regression":
            reg = heteroscedastic_regression(precision_n=n, adc_bits=cfg["adc"]["bits"], **syn)
            net = reg.net
            task_kind = "regression"
        else:
            raise ValueError(f"unknown synthetic network kind {kind!r}")
    else:
        net = load_network(spec)
    net = _with_hardware(net, cfg)

    inp = cfg["inputs"]
    labels = levels = None
    if isinstance(inp, str):
        X = load_inputs(inp)
    elif reg is not None:
        count = int((inp or {}).get("count", 20))
        X, labels = reg.inputs[:count], reg.targets[:count]
    elif proto is not None:
        inp = dict(inp or {})
        lv = inp.get("corruption", [0.0, 0.6, 0.9])
        lv_list = list(lv) if isinstance(lv, (list, tuple)) else [lv]
        count = int(inp.get("count", 4))
        xs, ls, lvs = [], [], []
        for level in lv_list:
            X, y = corrupted_inputs(proto, float(level), count, int(inp.get("seed", 0)))
            xs.append(X)
            ls.append(y)
            lvs.append(np.full(count, float(level)))
        X, labels, levels = np.vstack(xs), np.concatenate(ls), np.concatenate(lvs)
    else:
        raise ValueError("a network file needs an input CSV (config field 'inputs')")
    if X.shape[1] != net.input_dim:
        raise ValueError(f"inputs have {X.shape[1]} values, network expects {net.input_dim}")
    return Workload(net, X, labels, levels, task_kind)


def _with_hardware(net, cfg):
    from .network import NetworkSpec

    n = cfg["precision_n"] or net.precision_n
    m = cfg["macro"]
    return NetworkSpec(list(net.layers), n, cfg["adc"]["bits"], m["mav_denominator"], m["rows"], m["cols"])


def schedule_source(cfg: Mapping, net, stream: int):
    """Bit source for input ``stream``: per-task generator state, shared chip parameters."""
    from .dropout_rng import BiasPerturbation, RngBank, bank_size

    rng = cfg["rng"]
    seed = rng["seed"]
    p = rng["p_drop"]
    if rng["source"] == "ideal":
        return np.random.default_rng([seed, 5, stream])
    size = bank_size(cfg["macro"]["cols"], net.precision_n)
    if rng["source"] == "beta":
        return RngBank(size, 1 - p, seed, BiasPerturbation(rng["a"], seed)).reseed(stream)
    if rng["source"] == "embedded":
        return RngBank(size, 1 - p, seed, embedded=True).reseed(stream)
    raise ValueError(f"source {rng['source']!r} does not generate bits")


def workload_schedules(cfg: Mapping, net, stream: int):
    from .mc_engine import ScheduleError, load_schedule
    from .network import sample_network_schedules

    rng = cfg["rng"]
    if rng["source"] != "file":
        return sample_network_schedules(net, cfg["T"], rng["p_drop"], schedule_source(cfg, net, stream))
    paths = rng["schedule"] if isinstance(rng["schedule"], list) else [rng["schedule"]]
    holders = [k for k, layer in enumerate(net.layers) if layer.has_dropout]
    if len(paths) != len(holders):
        raise ScheduleError(f"{len(paths)} schedule files for {len(holders)} dropout layers")
    out = [None] * len(net.layers)
    for k, path in zip(holders, paths):
        out[k] = load_schedule(path, net.layers[k].fan_in, net.layers[k].fan_out)
    return out


def workload_adc(cfg: Mapping, work: Workload, frames: Optional[int] = None):
    """Converter for a run; the asymmetric tree is fitted on warm-up passes unless stored."""
    from .sar_adc import SarTree

    adc = cfg["adc"]
    vdd = cfg["macro"]["vdd"]
    if adc["mode"] == "ideal":
        return None
    if adc["mode"] == "symmetric":
        return SarAdc(build_symmetric(adc["bits"], vdd))
    if adc["tree"] is not None:
        return SarAdc(SarTree.load(adc["tree"]))
    return SarAdc(warmup_tree(cfg, work, frames))


def warmup_mavs(cfg: Mapping, work: Workload, frames: Optional[int] = None) -> np.ndarray:
    from .network import forward_mc, sample_network_schedules

    frames = cfg["adc"]["warmup_frames"] if frames is None else frames
    if frames < 1:
        raise ValueError("warmup_frames must be >= 1")
    rec = MavRecorder()
    p = cfg["rng"]["p_drop"]
    for f in range(frames):
        x = work.inputs[f % len(work.inputs)]
        scheds = sample_network_schedules(work.net, cfg["T"], p, np.random.default_rng([cfg["rng"]["seed"], 9, f]))
        forward_mc(work.net, x, scheds, cfg["mode"], rec, cfg["requant"], solver=cfg["solver"],
                   operator=cfg["operator"])
    return rec.values()


def warmup_tree(cfg: Mapping, work: Workload, frames: Optional[int] = None):
    adc = cfg["adc"]
    return build_asymmetric(warmup_mavs(cfg, work, frames), adc["bits"], cfg["macro"]["vdd"],
                            merge_tol=adc["merge_tol"])


def run_workload(cfg: Mapping, work: Workload, adc=None, threads: int = 1, trace: bool = False) -> list[InputRun]:
    """Every input through ``forward_mc``; results come back in input order."""
    from concurrent.futures import ThreadPoolExecutor

    from .network import forward_mc

    def one(i):
        scheds = workload_schedules(cfg, work.net, i)
        res = forward_mc(work.net, work.inputs[i], scheds, cfg["mode"], adc, cfg["requant"], EnergyLedger(), trace,
                         cfg["solver"], cfg["operator"])
        return InputRun(i, res)

    idx = range(len(work.inputs))
    if threads <= 1:
        return [one(i) for i in idx]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, idx))
