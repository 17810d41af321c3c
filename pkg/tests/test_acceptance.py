"""End-to-end acceptance checks, one test per criterion.

Each test prints a PASS/FAIL line (collected again in the terminal summary)
and fails if its criterion is not met. Expected values come from the
scalar/two-pass oracles in this file or from brute force, never from the code
under test.
"""
import json
import math
import time
from itertools import permutations

import numpy as np
import pytest

from cimdrop import cli
from cimdrop.analysis import energy_report, normalized_entropy, pearson, spearman, uncertainty_report
from cimdrop.config import resolve
from cimdrop.dropout_rng import calibrate, estimate_p1, make_instance
from cimdrop.experiments import build_workload, calibrate_tree, compare_modes, run_workload, single_layer_workload, \
    workload_adc
from cimdrop.fixedpoint import QuantMatrix, QuantVector, max_magnitude
from cimdrop.macro import MacroBank, MacroConfig, MacroState
from cimdrop.mc_engine import order_schedule, path_cost, run_dense, run_reuse, sample_schedule, save_schedule, \
    solve_order
from cimdrop.mf_op import build_schedule, conventional_correlate, conventional_cycles, mf_bitplane_execute
from cimdrop.sar_adc import MavRecorder, SarAdc, build_symmetric
from cimdrop.synthetic import CORRUPTION_LEVELS

pytestmark = pytest.mark.slow


def _mf_scalar(w, x):
    s = lambda v: 1 if v >= 0 else -1  # noqa: E731
    return sum(s(b) * abs(a) + s(a) * abs(b) for a, b in zip(w, x))


def _random_ints(g, n, size):
    top = max_magnitude(n)
    return g.integers(-top, top + 1, size)


def test_01_operator_oracle(verdict):
    g = np.random.default_rng(1)
    t0 = time.perf_counter()
    pairs, bad = 0, 0
    for n in (2, 4, 6, 8):
        sched = build_schedule(n)
        m = MacroState(MacroConfig(rows=1, cols=31))
        for _ in range(10_000):
            length = int(g.integers(1, 32))
            a, b = _random_ints(g, n, length), _random_ints(g, n, length)
            w, x = QuantVector.from_ints(a, n), QuantVector.from_ints(b, n)
            if length < 31:  # pad unused columns with zero weights and inputs
                w = QuantVector.from_ints(np.concatenate([a, np.zeros(31 - length, int)]), n)
                x = QuantVector.from_ints(np.concatenate([b, np.zeros(31 - length, int)]), n)
            got = mf_bitplane_execute(w, x, sched, m, input_mask=np.arange(31) < length)
            bad += got != _mf_scalar(a.tolist(), b.tolist())
            pairs += 1
    dt = time.perf_counter() - t0
    verdict(1, "MF operator equals oracle", bad == 0 and dt < 60,
            f"{pairs} pairs over n=2,4,6,8, {bad} mismatches, {dt:.1f}s")


def test_02_cycle_law(verdict):
    g = np.random.default_rng(2)
    ok = True
    found = []
    for n in range(2, 9):
        m = MacroState(MacroConfig(rows=1, cols=16))
        w = QuantVector.from_ints(_random_ints(g, n, 16), n)
        x = QuantVector.from_ints(_random_ints(g, n, 16), n)
        mf_bitplane_execute(w, x, build_schedule(n), m)
        W = QuantMatrix(w.signs[None, :], w.magnitudes[None, :], n)
        bank = MacroBank(MacroConfig(rows=1, cols=16), (1, 16))
        conventional_correlate(W, x, bank)
        ok &= m.cycle_counter == 2 * (n - 1) and bank.cycle_counter == n * n == conventional_cycles(n)
        found.append(f"n={n}:{m.cycle_counter}/{bank.cycle_counter}")
    verdict(2, "2(n-1) cycles per correlation, n^2 conventional", ok, " ".join(found))


def test_03_reuse_equivalence(verdict):
    g = np.random.default_rng(3)
    cases, bad = 1000, 0
    for _ in range(cases):
        n = int(g.integers(2, 9))
        fan_in, fan_out = int(g.integers(1, 41)), int(g.integers(1, 21))
        v = _random_ints(g, n, (fan_out, fan_in))
        W = QuantMatrix(np.where(v < 0, -1, 1), np.abs(v), n, float(g.uniform(0.1, 1)))
        x = QuantVector.from_ints(_random_ints(g, n, fan_in), n, float(g.uniform(0.1, 1)))
        sched = sample_schedule(g, int(g.integers(2, 7)), fan_in, fan_out, float(g.uniform(0, 0.9)),
                                dropout_out=bool(g.integers(0, 2)))
        cfg = MacroConfig()
        d = run_dense(sched, W, x, MacroBank(cfg, W.shape))
        r = run_reuse(sched, W, x, MacroBank(cfg, W.shape))
        bad += not (np.array_equal(d.per_iteration_outputs, r.per_iteration_outputs)
                    and np.array_equal(d.partials, r.partials))
    verdict(3, "reuse flow equals dense flow", bad == 0, f"{cases} random layers/schedules, {bad} mismatches")


def _mac_ratios(ordered: bool, seeds=range(100)):
    out = []
    for s in seeds:
        g = np.random.default_rng([s, 40])
        v = _random_ints(g, 6, (10, 10))
        W = QuantMatrix(np.where(v < 0, -1, 1), np.abs(v), 6)
        x = QuantVector.from_ints(_random_ints(g, 6, 10), 6)
        sched = sample_schedule(g, 100, 10, 10, 0.5)
        if ordered:
            sched = order_schedule(sched, "two_opt")
        res = run_reuse(sched, W, x, MacroBank(MacroConfig(), W.shape))
        out.append(res.mac_count_reuse / res.mac_count_dense)
    return np.array(out)


def test_04_reuse_mac_savings(verdict):
    r = _mac_ratios(False)
    m = float(r.mean())
    verdict(4, "reuse MAC ratio in [0.46, 0.58]", 0.46 <= m <= 0.58,
            f"mean {m:.3f} over {r.size} seeds (T=100, 10x10, p=0.5), range {r.min():.3f}-{r.max():.3f}")


def test_05_ordered_mac_savings(verdict):
    t0 = time.perf_counter()
    r = _mac_ratios(True)
    dt = time.perf_counter() - t0
    m = float(r.mean())
    verdict(5, "ordered MAC ratio <= 0.30", m <= 0.30 and dt < 60,
            f"mean {m:.3f} over {r.size} seeds with 2-opt, range {r.min():.3f}-{r.max():.3f}, {dt:.1f}s")


def _mask_dist(g, T):
    s = sample_schedule(g, T, 10, 10, 0.5)
    return s.distance_matrix


def _brute(d):
    T = d.shape[0]
    return min(sum(int(d[p[i], p[i + 1]]) for i in range(T - 1)) for p in permutations(range(T)))


def test_06_tsp_optimality(verdict):
    g = np.random.default_rng(6)
    exact_bad = 0
    for i in range(120):
        T = 2 + i % 7
        d = _mask_dist(g, T)
        exact_bad += path_cost(d, solve_order(d, "exact_dp")) != _brute(d)
    worst = 0.0
    for i in range(120):
        T = 3 + i % 10
        d = _mask_dist(g, T)
        ex = path_cost(d, solve_order(d, "exact_dp"))
        to = path_cost(d, solve_order(d, "two_opt"))
        worst = max(worst, to / ex if ex else 1.0)
    verdict(6, "exact_dp optimal, 2-opt within 1.2x", exact_bad == 0 and worst <= 1.2,
            f"120 instances T<=8 with {exact_bad} exact misses; worst 2-opt/exact {worst:.3f} over T<=12")


def test_07_asymmetric_cycles(verdict):
    cyc = np.array([compare_modes(seed=s)["reuse"].ledger.mean_conversion_cycles() for s in range(10)])
    m = float(cyc.mean())
    verdict(7, "asymmetric mean cycles in [2.2, 3.2] and >=35% below 5",
            2.2 <= m <= 3.2 and m <= 0.65 * 5,
            f"mean {m:.3f} over 10 seeds (range {cyc.min():.2f}-{cyc.max():.2f}), {100 * (1 - m / 5):.0f}% below 5")


def test_08_adc_grid_consistency(verdict):
    worst, samples = 0, 0
    sym = build_symmetric(5, 0.85)
    for s in range(10):
        W, x = single_layer_workload(s)
        cfg = MacroConfig()
        for mode in ("typical", "reuse", "reuse_ordered"):
            tree = calibrate_tree(mode, W, x, cfg, 5, 0.5, 30, s)
            sched = sample_schedule(np.random.default_rng([s, 7]), 30, 31, 16, 0.5)
            if mode == "reuse_ordered":
                sched = order_schedule(sched)
            rec = MavRecorder(SarAdc(tree))
            (run_dense if mode == "typical" else run_reuse)(sched, W, x, MacroBank(cfg, W.shape), rec)
            v = rec.values()
            worst = max(worst, int(np.abs(tree.convert_many(v)[0] - sym.convert_many(v)[0]).max()))
            samples += v.size
    verdict(8, "asymmetric and symmetric codes within 1 LSB", worst <= 1,
            f"max code difference {worst} over {samples} replayed voltages")


def test_09_rng_calibration(verdict):
    t0 = time.perf_counter()
    before, after = [], []
    for s in range(100):
        inst = make_instance(s)
        before.append(estimate_p1(inst))
        calibrate(inst, 0.5)
        after.append(estimate_p1(inst))
    s0, s1 = float(np.std(before)), float(np.std(after))
    dt = time.perf_counter() - t0
    verdict(9, "calibrated sigma(p1) <= 0.1, ratio >= 3", s1 <= 0.1 and s0 / s1 >= 3 and dt < 60,
            f"sigma {s0:.3f} -> {s1:.3f} (ratio {s0 / s1:.2f}) over 100 instances, {dt:.1f}s")


def test_10_energy_ratios(verdict):
    runs = compare_modes(seed=0)
    rep = energy_report({m: r.ledger for m, r in runs.items()})
    ratio = rep.ratio("reuse", "typical")
    ok = (0.60 <= ratio <= 0.72 and rep.total("reuse_ordered") <= rep.total("reuse")
          and rep.adc_share("reuse") < 0.21 and rep.adc_share("reuse_ordered") < 0.16)
    verdict(10, "energy ratios and converter shares", ok,
            f"typical {rep.total('typical') / 1e3:.1f} pJ, reuse {rep.total('reuse') / 1e3:.1f} pJ "
            f"(ratio {ratio:.3f}, ADC {100 * rep.adc_share('reuse'):.1f}%), ordered "
            f"{rep.total('reuse_ordered') / 1e3:.1f} pJ (ADC {100 * rep.adc_share('reuse_ordered'):.1f}%)")


def _entropies(user):
    cfg = resolve(user)
    work = build_workload(cfg)
    runs = run_workload(cfg, work, workload_adc(cfg, work))
    k = work.net.output_dim
    return work, np.array([uncertainty_report(r.result.per_iteration_outputs, k).normalized_entropy for r in runs])


def test_11_uncertainty_behaviour(verdict):
    ends = normalized_entropy([30] + [0] * 9) == 0.0 and math.isclose(normalized_entropy([3] * 10), 1.0)
    rhos = []
    for seed in range(5):
        user = {"network": {"synthetic": {"kind": "prototype", "seed": seed}},
                "inputs": {"corruption": CORRUPTION_LEVELS.tolist(), "count": 8, "seed": seed},
                "rng": {"seed": seed}}
        work, H = _entropies(user)
        rhos.append(spearman(CORRUPTION_LEVELS, [H[work.levels == lv].mean() for lv in CORRUPTION_LEVELS]))
    rho = float(np.mean(rhos))
    shifts = {}
    for a in (None, 2.0, 5.0):
        means = []
        for seed in range(3):
            user = {"network": {"synthetic": {"kind": "prototype", "seed": seed}},
                    "inputs": {"corruption": [0.0, 0.6, 0.8, 0.9], "count": 6, "seed": seed},
                    "rng": {"seed": seed, "source": "beta", "a": a}}
            means.append(_entropies(user)[1].mean())
        shifts[a] = float(np.mean(means))
    worst = max(abs(shifts[a] - shifts[None]) for a in (2.0, 5.0))
    verdict(11, "entropy bounds, corruption monotonicity, Beta robustness", ends and rho >= 0.8 and worst <= 0.1,
            f"H(unanimous)=0, H(uniform)=1; Spearman {rho:.3f} (per seed {', '.join(f'{r:.2f}' for r in rhos)}); "
            f"Beta a=2/5 entropy shift {worst:.3f}")


def _pearson_two_pass(a, b):
    n = len(a)
    ma, mb = math.fsum(a) / n, math.fsum(b) / n
    cov = math.fsum((x - ma) * (y - mb) for x, y in zip(a, b))
    return cov / (math.sqrt(math.fsum((x - ma) ** 2 for x in a)) * math.sqrt(math.fsum((y - mb) ** 2 for y in b)))


def test_12_correlation_metric(verdict):
    g = np.random.default_rng(12)
    worst = 0.0
    for _ in range(200):
        n = int(g.integers(3, 200))
        a = g.normal(size=n) * 10 ** g.uniform(-3, 3)
        b = 0.3 * a + g.normal(size=n)
        worst = max(worst, abs(pearson(a, b) - _pearson_two_pass(a.tolist(), b.tolist())))
    rs = []
    for seed in range(5):
        cfg = resolve({"network": {"synthetic": {"kind": "regression", "seed": seed}}, "inputs": {"count": 40},
                       "rng": {"seed": seed}})
        work = build_workload(cfg)
        runs = run_workload(cfg, work, workload_adc(cfg, work))
        err = [abs(r.result.mean()[0] - work.labels[r.index]) for r in runs]
        rs.append(pearson(err, [r.result.variance()[0] for r in runs]))
    r = float(np.mean(rs))
    verdict(12, "pearson oracle match and error/variance r > 0.25", worst <= 1e-12 and r > 0.25,
            f"max |pearson - two-pass| {worst:.1e}; synthetic regression r {r:.3f} "
            f"(per seed {', '.join(f'{x:.2f}' for x in rs)})")


def _run_twice(tmp_path, argv, tag):
    outs = []
    for threads in ("1", "2"):
        out = tmp_path / f"{tag}_{threads}"
        code = cli.main(argv + ["--out", str(out), "--threads", threads])
        assert code == 0, (argv, code)
        outs.append(out)
    a, b = outs
    names = sorted(p.name for p in a.iterdir())
    same = names == sorted(p.name for p in b.iterdir()) and all(
        (a / f).read_bytes() == (b / f).read_bytes() for f in names)
    return same, len(names)


def test_13_determinism(verdict, tmp_path):
    save_schedule(sample_schedule(0, 12, 31, 10, 0.5), tmp_path / "sched.json")
    configs = {
        "run_default": ({}, ["run"]),
        "run_beta_ordered": ({"mode": "reuse_ordered", "rng": {"source": "beta", "a": 2.0}}, ["run", "--trace"]),
        "run_regression": ({"network": {"synthetic": "regression"}, "inputs": {"count": 6}}, ["run"]),
        "sweep": ({"T": 10, "inputs": {"count": 2}}, ["sweep", "--axis", "p_drop", "--values", "0.3", "0.5"]),
        "calibrate": ({}, ["calibrate-adc"]),
        "order": ({}, ["order-schedule", str(tmp_path / "sched.json")]),
        "rng": ({"rng": {"instances": 30}}, ["rng-report"]),
    }
    results = {}
    for tag, (doc, argv) in configs.items():
        p = tmp_path / f"{tag}.json"
        p.write_text(json.dumps(doc))
        results[tag] = _run_twice(tmp_path, argv + ["--config", str(p), "--seed", "7"], tag)
    ok = all(same for same, _ in results.values())
    files = sum(n for _, n in results.values())
    verdict(13, "byte-identical artifacts for 1 and 2 threads", ok,
            f"{len(configs)} configs, {files} artifacts compared"
            + ("" if ok else f"; differing: {[t for t, (s, _) in results.items() if not s]}"))
