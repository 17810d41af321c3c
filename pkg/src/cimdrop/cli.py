"""Command-line harness: configs in, CSV artifacts out.

Subcommands ``run``, ``sweep``, ``calibrate-adc``, ``order-schedule`` and
``rng-report``. Exit status is 0 on success, 2 for configuration or schema
errors and 3 for failures during a run.
"""
from __future__ import annotations

import argparse
import copy
import csv
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .analysis import MetricError, energy_report, pearson, uncertainty_report
from .config import ConfigError, dump_config, load_config, resolve
from .dropout_rng import calibrate, estimate_p1, make_instance
from .experiments import Workload, build_workload, run_workload, warmup_mavs, workload_adc
from .ledger import EnergyConstants, EnergyLedger
from .mc_engine import ScheduleError, load_schedule, order_schedule, save_schedule
from .network import NetworkError
from .sar_adc import build_asymmetric, build_symmetric, write_histogram_csv

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
SWEEP_AXES = ("precision", "beta_a", "p_drop")


def _fmt(v: float) -> str:
    return f"{float(v):.9g}"


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# -- shared setup ---------------------------------------------------------------

def _setup(args) -> tuple[dict, str]:
    cfg = load_config(args.config)
    if args.seed is not None:
        if args.seed < 0 or args.seed >= 2 ** 64:
            raise ConfigError("flag '--seed' must be an unsigned 64-bit integer")
        cfg["rng"]["seed"] = args.seed
    if args.threads < 1:
        raise ConfigError("flag '--threads' must be >= 1")
    out = args.out if args.out is not None else cfg["output_dir"]
    if args.out is None and args.config is not None and not os.path.isabs(out):
        out = os.path.join(os.path.dirname(os.path.abspath(args.config)), out)
    os.makedirs(out, exist_ok=True)
    return cfg, out


def _workload(cfg) -> Workload:
    # a network/input pair that does not fit together is a config problem
    try:
        return build_workload(cfg)
    except (NetworkError, ScheduleError, ConfigError):
        raise
    except (ValueError, TypeError) as e:
        raise ConfigError(f"config field 'network'/'inputs': {e}") from e


def _constants(cfg) -> EnergyConstants:
    return EnergyConstants.from_dict({**EnergyConstants().as_dict(), **cfg["energy"]})


def _merge_ledgers(runs) -> EnergyLedger:
    total = EnergyLedger()
    for r in runs:
        total.merge(r.result.ledger)
    return total


def _summaries(work: Workload, runs):
    """Per-input uncertainty reports; regression runs get the error/variance correlation."""
    r = None
    if work.task == "regression" and work.labels is not None and len(runs) >= 2:
        err = [abs(run.result.mean()[0] - work.labels[run.index]) for run in runs]
        var = [run.result.variance()[0] for run in runs]
        try:
            r = pearson(err, var)
        except MetricError:
            r = None
    k = work.net.output_dim
    return [uncertainty_report(run.result.per_iteration_outputs, k if k >= 2 else None, r) for run in runs], r


def _execute(cfg, threads: int, trace: bool = False):
    work = _workload(cfg)
    adc = workload_adc(cfg, work)
    runs = run_workload(cfg, work, adc, threads, trace)
    return work, runs


# -- run -------------------------------------------------------------------------

def cmd_run(args) -> int:
    cfg, out = _setup(args)
    dump_config(cfg, os.path.join(out, "resolved_config.json"))
    work, runs = _execute(cfg, args.threads, args.trace)

    k = work.net.output_dim
    rows = []
    for run in runs:
        for t, y in enumerate(run.result.per_iteration_outputs):
            rows.append([run.index, t] + [_fmt(v) for v in y])
    _write_rows(os.path.join(out, "per_iteration_outputs.csv"), ["input", "iteration"] + [f"out_{j}" for j in range(k)],
                rows)

    reports, r = _summaries(work, runs)
    rows = []
    for run, rep in zip(runs, reports):
        extra = []
        if work.labels is not None:
            extra.append(("target" if work.task == "regression" else "label", _fmt(work.labels[run.index])
                          if work.task == "regression" else str(int(work.labels[run.index]))))
        if work.levels is not None:
            extra.append(("corruption", _fmt(work.levels[run.index])))
        extra.append(("activation_clamps", str(run.result.activation_clamps)))
        rows += [[run.index, m, v] for m, v in extra + rep.rows()]
    _write_rows(os.path.join(out, "uncertainty_report.csv"), ["input", "metric", "value"], rows)

    ledger = _merge_ledgers(runs)
    rep = energy_report({cfg["mode"]: ledger}, _constants(cfg))
    rep.write_csv(os.path.join(out, "energy_report.csv"))
    with open(os.path.join(out, "energy_report.txt"), "w") as fh:
        fh.write(rep.to_text())
    macs = [sum(x.result.mac_count for x in runs), sum(x.result.mac_count_dense for x in runs)]
    rows = [[name, v] for name, v in ledger.as_dict().items()]
    rows += [["mac_count", macs[0]], ["mac_count_dense", macs[1]],
             ["cycles", sum(x.result.cycles for x in runs)]]
    _write_rows(os.path.join(out, "ledger.csv"), ["counter", "value"], rows)

    if args.trace:
        for run in runs:
            for li, bank in enumerate(run.result.banks):
                bank.write_trace_csv(os.path.join(out, f"trace_input{run.index}_layer{li}.csv"))
    print(f"{len(runs)} inputs x {cfg['T']} iterations, mode {cfg['mode']}: "
          f"{rep.total(cfg['mode']) / 1000:.3f} pJ, wrote {out}")
    return EXIT_OK


# -- sweep -----------------------------------------------------------------------

def _sweep_config(cfg: dict, axis: str, value) -> dict:
    user = copy.deepcopy(cfg)
    if axis == "precision":
        if isinstance(value, bool) or not isinstance(value, int) and not float(value).is_integer():
            raise ConfigError(f"config field 'sweep.values': precision {value!r} is not an integer")
        user["precision_n"] = int(value)
    elif axis == "beta_a":
        # 0 / null stands for the unperturbed source
        user["rng"]["source"] = "beta"
        user["rng"]["a"] = None if value in (None, 0) else float(value)
    else:
        user["rng"]["p_drop"] = float(value)
    try:
        return resolve(user, ".")
    except ConfigError as e:
        raise ConfigError(f"config field 'sweep.values' ({axis}={value!r}): {e}") from e


def _sweep_metrics(cfg: dict, work: Workload, runs) -> list[tuple[str, float]]:
    reports, r = _summaries(work, runs)
    out = []
    if work.net.output_dim >= 2:
        ent = np.array([rep.normalized_entropy for rep in reports])
        out.append(("mean_entropy", float(ent.mean())))
        if work.levels is not None:
            for lv in np.unique(work.levels):
                out.append((f"entropy@corruption={lv:.4f}", float(ent[work.levels == lv].mean())))
        if work.labels is not None and work.task == "classification":
            acc = np.mean([rep.prediction == int(work.labels[i]) for i, rep in enumerate(reports)])
            out.append(("accuracy", float(acc)))
    out.append(("mean_variance", float(np.mean([rep.predictive_variance.mean() for rep in reports]))))
    if r is not None:
        out.append(("pearson_r", r))
    macs = sum(x.result.mac_count for x in runs)
    dense = sum(x.result.mac_count_dense for x in runs)
    out.append(("mac_count", float(macs)))
    out.append(("mac_ratio", macs / dense if dense else 0.0))
    ledger = _merge_ledgers(runs)
    rep = energy_report({"run": ledger}, _constants(cfg))
    out.append(("energy_fj", rep.total("run")))
    out.append(("adc_share", rep.adc_share("run")))
    return out


def cmd_sweep(args) -> int:
    cfg, out = _setup(args)
    axis = args.axis if args.axis is not None else cfg["sweep"]["axis"]
    values = args.values if args.values is not None else cfg["sweep"]["values"]
    if axis not in SWEEP_AXES:
        raise ConfigError(f"config field 'sweep.axis' must be one of {SWEEP_AXES}, got {axis!r}")
    if not isinstance(values, list) or not values:
        raise ConfigError("config field 'sweep.values' must be a non-empty list")
    cfg["sweep"] = {"axis": axis, "values": list(values)}
    dump_config(cfg, os.path.join(out, "resolved_config.json"))
    variants = [_sweep_config(cfg, axis, v) for v in values]  # validate every value before running
    rows = []
    for v, vc in zip(values, variants):
        work, runs = _execute(vc, args.threads)
        rows += [[axis, v, m, _fmt(x)] for m, x in _sweep_metrics(vc, work, runs)]
    _write_rows(os.path.join(out, "sweep.csv"), ["axis", "value", "metric", "result"], rows)
    print(f"sweep over {axis} ({len(values)} values), wrote {out}")
    return EXIT_OK


# -- calibrate-adc --------------------------------------------------------------

def cmd_calibrate_adc(args) -> int:
    cfg, out = _setup(args)
    if args.warmup_frames is not None:
        cfg["adc"]["warmup_frames"] = args.warmup_frames
        cfg = resolve(cfg, ".")
    dump_config(cfg, os.path.join(out, "resolved_config.json"))
    work = _workload(cfg)
    mavs = warmup_mavs(cfg, work)  # recorded behind an ideal converter
    bits, vdd = cfg["adc"]["bits"], cfg["macro"]["vdd"]
    tree = build_asymmetric(mavs, bits, vdd, merge_tol=cfg["adc"]["merge_tol"])
    tree.save(os.path.join(out, "adc_tree.json"))
    write_histogram_csv(os.path.join(out, "mav_histogram.csv"), mavs, bits, vdd)
    sym = build_symmetric(bits, vdd)
    a_codes, a_cycles = tree.convert_many(mavs)
    s_codes, s_cycles = sym.convert_many(mavs)
    delta = int(np.abs(a_codes - s_codes).max()) if mavs.size else 0
    rows = [
        ["samples", mavs.size],
        ["adc_bits", bits],
        ["replay_mean_cycles", _fmt(a_cycles.mean() if mavs.size else 0.0)],
        ["symmetric_mean_cycles", _fmt(s_cycles.mean() if mavs.size else 0.0)],
        ["max_code_delta", delta],
        ["tree_nodes", tree.n_nodes],
        ["tree_depth", tree.depth()],
        ["degenerate", int(tree.degenerate)],
    ]
    _write_rows(os.path.join(out, "adc_report.csv"), ["metric", "value"], rows)
    if tree.degenerate:
        print("warning: MAV histogram is degenerate (a single occupied cell); the tree is one "
              "leaf and every conversion returns its code", file=sys.stderr)
    print(f"asymmetric tree from {mavs.size} samples: {a_cycles.mean() if mavs.size else 0:.3f} cycles/conversion, "
          f"wrote {out}")
    return EXIT_OK


# -- order-schedule --------------------------------------------------------------

def cmd_order_schedule(args) -> int:
    cfg, out = _setup(args)
    solver = args.solver if args.solver is not None else cfg["solver"]
    path = args.schedule if args.schedule is not None else cfg["rng"]["schedule"]
    if path is None:
        raise ConfigError("config field 'rng.schedule': order-schedule needs a schedule file")
    if isinstance(path, list):
        raise ConfigError("config field 'rng.schedule': order-schedule takes a single file")
    if not os.path.exists(path):
        raise ConfigError(f"schedule file not found: {path}")
    cfg["solver"] = solver
    cfg = resolve(cfg, ".")
    dump_config(cfg, os.path.join(out, "resolved_config.json"))
    sched = load_schedule(path)
    ordered = order_schedule(sched, solver)
    save_schedule(ordered, os.path.join(out, "ordered_schedule.json"))
    before, after = sched.cost(), ordered.cost()
    rows = [
        ["T", sched.T],
        ["solver", solver],
        ["cost_before", before],
        ["cost_after", after],
        ["reduction", _fmt(1.0 - after / before if before else 0.0)],
    ]
    _write_rows(os.path.join(out, "order_report.csv"), ["metric", "value"], rows)
    print(f"path cost {before} -> {after} ({solver}), wrote {out}")
    return EXIT_OK


# -- rng-report ------------------------------------------------------------------

def cmd_rng_report(args) -> int:
    cfg, out = _setup(args)
    dump_config(cfg, os.path.join(out, "resolved_config.json"))
    target = 1.0 - cfg["rng"]["p_drop"]
    if not 0 < target < 1:
        raise ConfigError("config field 'rng.p_drop' must be in (0, 1) for calibration")
    base = cfg["rng"]["seed"]
    seeds = [base + i for i in range(cfg["rng"]["instances"])]

    def one(seed):
        inst = make_instance(seed)
        before = estimate_p1(inst)
        res = calibrate(inst, target)
        return seed, before, estimate_p1(inst), res.steps, res.converged, inst.true_p1()

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(one, seeds))
    else:
        results = [one(s) for s in seeds]
    _write_rows(os.path.join(out, "rng_instances.csv"),
                ["seed", "p1_uncalibrated", "p1_calibrated", "steps", "converged", "p1_exact"],
                [[s, _fmt(b), _fmt(a), st, int(c), _fmt(e)] for s, b, a, st, c, e in results])
    unc = np.array([r[1] for r in results])
    cal = np.array([r[2] for r in results])
    s_unc, s_cal = float(unc.std()), float(cal.std())
    rows = [
        ["instances", len(results)],
        ["target_p1", _fmt(target)],
        ["sigma_uncalibrated", _fmt(s_unc)],
        ["sigma_calibrated", _fmt(s_cal)],
        ["sigma_ratio", _fmt(s_unc / s_cal) if s_cal > 0 else "inf"],
        ["converged_fraction", _fmt(np.mean([r[4] for r in results]))],
        ["mean_steps", _fmt(np.mean([r[3] for r in results]))],
    ]
    _write_rows(os.path.join(out, "rng_report.csv"), ["metric", "value"], rows)
    print(f"sigma(p1) {s_unc:.3f} uncalibrated, {s_cal:.3f} calibrated over {len(results)} instances, wrote {out}")
    return EXIT_OK


# -- entry point -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON); defaults apply when omitted")
    common.add_argument("--out", help="output directory (overrides output_dir)")
    common.add_argument("--seed", type=int, help="root seed (overrides rng.seed)")
    common.add_argument("--threads", type=int, default=1, help="worker threads across inputs")
    common.add_argument("--trace", action="store_true", help="write per-cycle macro trace CSVs")

    p = argparse.ArgumentParser(prog="cimdrop", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="MC-Dropout inference with energy accounting")
    s = sub.add_parser("sweep", parents=[common], help="repeat a run along one parameter axis")
    s.add_argument("--axis", choices=SWEEP_AXES)
    s.add_argument("--values", type=float, nargs="*")
    c = sub.add_parser("calibrate-adc", parents=[common], help="fit an asymmetric SAR tree on warm-up voltages")
    c.add_argument("--warmup-frames", type=int)
    o = sub.add_parser("order-schedule", parents=[common], help="reorder a stored dropout schedule")
    o.add_argument("schedule", nargs="?", help="schedule JSON (default: rng.schedule)")
    o.add_argument("--solver", choices=("nearest_neighbor", "two_opt", "exact_dp"))
    sub.add_parser("rng-report", parents=[common], help="calibration statistics of simulated RNG instances")
    return p


COMMANDS = {
    "run": cmd_run,
    "sweep": cmd_sweep,
    "calibrate-adc": cmd_calibrate_adc,
    "order-schedule": cmd_order_schedule,
    "rng-report": cmd_rng_report,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "sweep" and args.values is not None:
        args.values = [int(v) if float(v).is_integer() else v for v in args.values]
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, NetworkError, ScheduleError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # noqa: BLE001 - any failure during a run maps to one exit status
        print(f"runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
