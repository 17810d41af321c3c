"""Dense networks mapped onto macro banks.

Per layer and iteration the data path is: input dropout mask, MF product-sum
on the array, conversion, shift-add, activation, requantization onto the next
layer's input grid. Output dropout is applied as row gating.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .fixedpoint import QuantMatrix, clamp_count, per_tensor_scale, quantize, quantize_matrix
from .ledger import EnergyLedger
from .macro import MacroBank, MacroConfig
from .mc_engine import (DropoutMask, DropoutSchedule, McResult, run_dense, run_reuse, sample_schedule,
                        solve_order)
from .mf_op import mf_reference_matrix

__all__ = [
    "NetworkError",
    "DenseLayer",
    "NetworkSpec",
    "load_network",
    "save_network",
    "load_inputs",
    "random_network",
    "sample_network_schedules",
    "order_network_schedules",
    "activation_scales",
    "mf_forward",
    "forward_mc",
    "forward_float",
    "MODES",
]

ACTIVATIONS = ("identity", "relu")
MODES = ("dense", "reuse", "reuse_ordered")


class NetworkError(ValueError):
    pass


@dataclass(frozen=True)
class DenseLayer:
    weights: np.ndarray
    activation: str = "identity"
    dropout_before: bool = False
    dropout_after: bool = False
    scale: Optional[float] = None  # fixed weight LSB; None picks the per-tensor scale

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 2 or w.size == 0:
            raise NetworkError("layer weights must be a non-empty 2-D matrix")
        if not np.all(np.isfinite(w)):
            raise NetworkError("layer weights contain NaN or infinite values")
        if self.activation not in ACTIVATIONS:
            raise NetworkError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def shape(self) -> tuple[int, int]:
        return self.weights.shape

    @property
    def fan_in(self) -> int:
        return self.weights.shape[1]

    @property
    def fan_out(self) -> int:
        return self.weights.shape[0]

    @property
    def has_dropout(self) -> bool:
        return self.dropout_before or self.dropout_after


@dataclass
class NetworkSpec:
    layers: list[DenseLayer]
    precision_n: int = 6
    adc_bits: int = 5
    mav_denominator: str = "physical"
    macro_rows: int = 16
    macro_cols: int = 31
    quantized: list[QuantMatrix] = field(default_factory=list, repr=False)
    quant_snr_db: list[float] = field(default_factory=list)
    clamp_warnings: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.layers:
            raise NetworkError("network needs at least one layer")
        if self.precision_n < 2:
            raise NetworkError("precision_n must be >= 2")
        if self.adc_bits < 1:
            raise NetworkError("adc_bits must be >= 1")
        for k in range(1, len(self.layers)):
            if self.layers[k].fan_in != self.layers[k - 1].fan_out:
                raise NetworkError(f"layer {k} expects {self.layers[k].fan_in} inputs but layer {k - 1} "
                                   f"produces {self.layers[k - 1].fan_out}")
        self.macro_config()  # validates geometry
        self.quantized, self.quant_snr_db, self.clamp_warnings = [], [], []
        for layer in self.layers:
            q = quantize_matrix(layer.weights, self.precision_n, layer.scale)
            self.quantized.append(q)
            self.clamp_warnings.append(clamp_count(layer.weights, self.precision_n, q.scale))
            err = float(np.sum((layer.weights - q.reconstruct()) ** 2))
            sig = float(np.sum(layer.weights ** 2))
            self.quant_snr_db.append(math.inf if err == 0 else 10 * math.log10(sig / err) if sig > 0 else -math.inf)

    def macro_config(self, vdd: float = 0.85) -> MacroConfig:
        try:
            return MacroConfig(self.macro_rows, self.macro_cols, vdd, mav_denominator=self.mav_denominator)
        except ValueError as e:
            raise NetworkError(str(e)) from e

    @property
    def input_dim(self) -> int:
        return self.layers[0].fan_in

    @property
    def output_dim(self) -> int:
        return self.layers[-1].fan_out

    def with_precision(self, n: int) -> "NetworkSpec":
        return NetworkSpec(list(self.layers), n, self.adc_bits, self.mav_denominator, self.macro_rows,
                           self.macro_cols)


# -- file I/O ----------------------------------------------------------------

def _require(d: Mapping, key: str, where: str):
    if key not in d:
        raise NetworkError(f"{where}: missing field {key!r}")
    return d[key]


def _layer_from_dict(d: Mapping, k: int) -> DenseLayer:
    where = f"layers[{k}]"
    if not isinstance(d, Mapping):
        raise NetworkError(f"{where}: expected an object")
    rows = int(_require(d, "rows", where))
    cols = int(_require(d, "cols", where))
    try:
        w = np.asarray(_require(d, "weights", where), dtype=float)
    except (TypeError, ValueError) as e:
        raise NetworkError(f"{where}.weights: not a numeric array") from e
    if w.size != rows * cols:
        raise NetworkError(f"{where}.weights: {w.size} values for a {rows}x{cols} layer")
    if not np.all(np.isfinite(w)):
        raise NetworkError(f"{where}.weights: NaN or infinite values")
    return DenseLayer(w.reshape(rows, cols), str(d.get("activation", "identity")), bool(d.get("dropout_before", False)),
                      bool(d.get("dropout_after", False)), d.get("scale"))


def network_from_dict(doc: Mapping) -> NetworkSpec:
    if not isinstance(doc, Mapping):
        raise NetworkError("network document must be a JSON object")
    layers = _require(doc, "layers", "network")
    if not isinstance(layers, list):
        raise NetworkError("network.layers must be a list")
    macro = doc.get("macro", {})
    return NetworkSpec([_layer_from_dict(d, k) for k, d in enumerate(layers)],
                       int(_require(doc, "precision_n", "network")), int(_require(doc, "adc_bits", "network")),
                       str(doc.get("mav_denominator", "physical")), int(macro.get("rows", 16)),
                       int(macro.get("cols", 31)))


def network_to_dict(net: NetworkSpec) -> dict:
    layers = []
    for layer in net.layers:
        d = {"rows": layer.fan_out, "cols": layer.fan_in, "weights": layer.weights.reshape(-1).tolist(),
             "activation": layer.activation, "dropout_before": layer.dropout_before,
             "dropout_after": layer.dropout_after}
        if layer.scale is not None:
            d["scale"] = layer.scale
        layers.append(d)
    return {"layers": layers, "precision_n": net.precision_n, "adc_bits": net.adc_bits,
            "mav_denominator": net.mav_denominator, "macro": {"rows": net.macro_rows, "cols": net.macro_cols}}


def load_network(path) -> NetworkSpec:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise NetworkError(f"network file is not valid JSON: {e}") from e
    return network_from_dict(doc)


def save_network(net: NetworkSpec, path) -> None:
    with open(path, "w") as fh:
        json.dump(network_to_dict(net), fh)


def load_inputs(path) -> np.ndarray:
    """Input vectors from CSV, one vector per line."""
    arr = np.loadtxt(path, delimiter=",", ndmin=2)
    if not np.all(np.isfinite(arr)):
        raise NetworkError("input file contains non-finite values")
    return arr


def random_network(dims: Sequence[int], seed: int = 0, precision_n: int = 6, adc_bits: int = 5,
                   activation: str = "relu", dropout: bool = True) -> NetworkSpec:
    """He-initialized chain ``dims[0] -> ... -> dims[-1]`` with input dropout on every layer."""
    g = np.random.default_rng(seed)
    layers = []
    for k in range(len(dims) - 1):
        w = g.normal(0.0, math.sqrt(2.0 / dims[k]), size=(dims[k + 1], dims[k]))
        act = activation if k < len(dims) - 2 else "identity"
        layers.append(DenseLayer(w, act, dropout_before=dropout))
    return NetworkSpec(layers, precision_n, adc_bits)


# -- schedules ---------------------------------------------------------------

def sample_network_schedules(net: NetworkSpec, T: int, p_drop: float, source=0) -> list[Optional[DropoutSchedule]]:
    """One schedule per layer (``None`` where the layer has no dropout).

    ``source`` is a seed, a generator, a :class:`BiasPerturbation` or an
    :class:`RngBank`, shared by all layers so masks are drawn in layer order.
    """
    if isinstance(source, (int, np.integer)):
        source = np.random.default_rng(source)
    out = []
    for layer in net.layers:
        if not layer.has_dropout:
            out.append(None)
            continue
        out.append(sample_schedule(source, T, layer.fan_in, layer.fan_out, p_drop, layer.dropout_before,
                                   layer.dropout_after))
    return out


def order_network_schedules(schedules: Sequence[Optional[DropoutSchedule]], solver: str = "two_opt",
                            max_evals: Optional[int] = None) -> list[Optional[DropoutSchedule]]:
    """Reorder all layer schedules with one shared permutation.

    Iteration ``i`` must see the same sample in every layer, so the path is
    solved over the summed per-layer Hamming distances.
    """
    present = [s for s in schedules if s is not None]
    if not present:
        return list(schedules)
    dist = sum(s.distance_matrix for s in present)
    perm = solve_order(dist, solver, max_evals)
    out = []
    for s in schedules:
        if s is None:
            out.append(None)
            continue
        d = s.distance_matrix[np.ix_(perm, perm)]
        out.append(DropoutSchedule([s.masks[i] for i in perm], s.p_drop, s.seed, solver, "file",
                                   s.ordering[perm], d))
    return out


def _full_schedule(layer: DenseLayer, T: int) -> DropoutSchedule:
    m = DropoutMask(np.ones(layer.fan_in, dtype=np.uint8), np.ones(layer.fan_out, dtype=np.uint8))
    return DropoutSchedule([m] * T, p_drop=0.0, source="none")


def _check_schedules(net: NetworkSpec, schedules) -> tuple[list[DropoutSchedule], int]:
    if isinstance(schedules, Mapping):
        schedules = [schedules.get(k) for k in range(len(net.layers))]
    schedules = list(schedules)
    if len(schedules) != len(net.layers):
        raise ValueError(f"{len(schedules)} schedules for {len(net.layers)} layers")
    Ts = {s.T for s in schedules if s is not None}
    if len(Ts) > 1:
        raise ValueError(f"schedules disagree on the iteration count: {sorted(Ts)}")
    T = Ts.pop() if Ts else 1
    out = []
    for k, (layer, s) in enumerate(zip(net.layers, schedules)):
        if s is None:
            out.append(_full_schedule(layer, T))
            continue
        if s.fan_in != layer.fan_in or s.fan_out != layer.fan_out:
            raise ValueError(f"schedule for layer {k} is {s.fan_in}->{s.fan_out}, layer is "
                             f"{layer.fan_in}->{layer.fan_out}")
        out.append(s)
    return out, T


# -- forward passes -----------------------------------------------------------

def _activate(v: np.ndarray, kind: str) -> np.ndarray:
    return np.maximum(v, 0.0) if kind == "relu" else v


def _mf_chain(net: NetworkSpec, x, requant: str = "per_layer"):
    n = net.precision_n
    xv = np.asarray(x, dtype=float).reshape(-1)
    scales = [per_tensor_scale(xv, n)]
    q = quantize(xv, n, scales[0])
    act = xv
    for k, (layer, W) in enumerate(zip(net.layers, net.quantized)):
        xw, wx = mf_reference_matrix(W, q)
        act = _activate(W.scale * xw + q.scale * wx, layer.activation)
        if k + 1 < len(net.layers):
            scales.append(per_tensor_scale(act, n))
            q = quantize(act, n, scales[-1])
    return act, scales


def mf_forward(net: NetworkSpec, x) -> np.ndarray:
    """Deterministic no-dropout pass of the quantized MF chain, computed off-array."""
    return _mf_chain(net, x)[0]


def activation_scales(net: NetworkSpec, x, requant: str = "per_layer") -> list[float]:
    """Input-grid scales for every layer, from the deterministic no-dropout pass.

    Entry 0 is the network input's own scale. ``requant="global"`` shares one
    scale (the largest) across all hidden activations.
    """
    if requant not in ("per_layer", "global"):
        raise ValueError(f"requant must be 'per_layer' or 'global', got {requant!r}")
    scales = _mf_chain(net, x)[1]
    if requant == "global" and len(scales) > 1:
        g = max(scales[1:])
        scales = [scales[0]] + [g] * (len(scales) - 1)
    return scales


def _layer_rescale(layer: DenseLayer, sched: DropoutSchedule) -> float:
    keep = 1.0 - sched.p_drop
    r = 1.0
    if layer.dropout_before:
        r /= keep
    if layer.dropout_after:
        r /= keep
    return r


def forward_mc(net: NetworkSpec, x, schedules, mode: str = "dense", adc=None, requant: str = "per_layer",
               ledger: Optional[EnergyLedger] = None, trace: bool = False, solver: str = "two_opt",
               operator: str = "mf", scales: Optional[Sequence[float]] = None,
               headroom: Optional[float] = None) -> McResult:
    """Run all ``T`` iterations through the layer chain.

    ``adc`` is a converter shared by all layers, a per-layer list, or ``None``
    for the ideal converter. Inverted-dropout rescaling ``1/(1-p)`` is applied
    to layers with dropout, and the next layer's input grid (taken from the
    no-dropout pass) is widened by the same factor. Returns the last layer's :class:`McResult` with the
    merged ledger and per-layer results attached.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    xv = np.asarray(x, dtype=float).reshape(-1)
    if xv.size != net.input_dim:
        raise ValueError(f"input has {xv.size} values, network expects {net.input_dim}")
    scheds, T = _check_schedules(net, schedules)
    if mode == "reuse_ordered" and T >= 2:
        real = [s if s.source != "none" else None for s in scheds]
        ordered = order_network_schedules(real, solver)
        scheds = [o if o is not None else s for o, s in zip(ordered, scheds)]
    if operator != "mf" and mode != "dense":
        raise ValueError("the conventional operator is only available in dense mode")
    ledger = ledger if ledger is not None else EnergyLedger()
    cfg = net.macro_config()
    adcs = list(adc) if isinstance(adc, (list, tuple)) else [adc] * len(net.layers)
    scales = list(scales) if scales is not None else activation_scales(net, xv, requant)
    n = net.precision_n

    inputs = [quantize(xv, n, scales[0])] * T
    clamps = clamp_count(xv, n, scales[0])
    layer_results = []
    banks = []
    for k, (layer, W, sched) in enumerate(zip(net.layers, net.quantized, scheds)):
        bank = MacroBank(cfg, W.shape, ledger, trace)
        banks.append(bank)
        resc = _layer_rescale(layer, sched)
        if mode == "dense":
            res = run_dense(sched, W, inputs, bank, adcs[k], resc, operator)
        else:
            res = run_reuse(sched, W, inputs, bank, adcs[k], resc)
        layer_results.append(res)
        if k + 1 < len(net.layers):
            act = _activate(res.per_iteration_outputs, layer.activation)
            # inverted dropout magnifies survivors; widen the grid to match
            s = scales[k + 1] * (resc if headroom is None else headroom)
            clamps += sum(clamp_count(a, n, s) for a in act)
            inputs = [quantize(a, n, s) for a in act]
    last = layer_results[-1]
    return McResult(last.partials, last.per_iteration_outputs,
                    sum(r.mac_count_dense for r in layer_results), sum(r.mac_count_reuse for r in layer_results),
                    sum(r.mac_count for r in layer_results), sum(r.cycles for r in layer_results), ledger,
                    mode, layers=layer_results, activation_clamps=clamps, banks=banks)


def forward_float(net: NetworkSpec, x, masks: Optional[Sequence[Optional[DropoutMask]]] = None,
                  p_drop: float = 0.0) -> np.ndarray:
    """Full-precision standard-operator reference, computed off-array.

    ``masks`` holds one optional mask per layer for a single stochastic pass.
    """
    v = np.asarray(x, dtype=float).reshape(-1)
    keep = 1.0 - p_drop
    for k, layer in enumerate(net.layers):
        m = masks[k] if masks is not None else None
        if m is not None and layer.dropout_before:
            v = v * m.input_bits / keep
        v = layer.weights @ v
        if m is not None and layer.dropout_after:
            v = v * m.output_bits / keep
        v = _activate(v, layer.activation)
    return v
