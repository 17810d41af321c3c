"""Compiled kernels against the pure-Python fallback.

Run ``python3 benchmarks/bench_kernels.py``; prints best-of-N wall time per
kernel and backend, and checks that both backends return the same answer.
"""
import argparse
import timeit

import numpy as np

from cimdrop import kernels
from cimdrop.mc_engine import sample_schedule
from cimdrop.sar_adc import build_asymmetric


def _cases(seed: int):
    g = np.random.default_rng(seed)
    mavs = np.clip(0.85 - np.abs(g.normal(0, 0.1, 20000)), 0, 0.85)
    tree = build_asymmetric(mavs[:10000], 5, 0.85)
    d30 = np.ascontiguousarray(sample_schedule(g, 30, 31, 16, 0.5).distance_matrix, dtype=np.int64)
    d100 = np.ascontiguousarray(sample_schedule(g, 100, 10, 10, 0.5).distance_matrix, dtype=np.int64)
    d12 = np.ascontiguousarray(sample_schedule(g, 12, 10, 10, 0.5).distance_matrix, dtype=np.int64)
    return {
        "sar_walk (20k conversions)": lambda k: k.sar_walk(tree.thresholds, tree.lo, tree.hi, tree.codes, mavs),
        "nearest_neighbor (T=100)": lambda k: k.nearest_neighbor_path(d100, 0),
        "two_opt (T=100)": lambda k: k.two_opt_path(d100, np.arange(100, dtype=np.int64), 100_000),
        "two_opt (T=30)": lambda k: k.two_opt_path(d30, np.arange(30, dtype=np.int64), 100_000),
        "held_karp (T=12)": lambda k: k.held_karp_path(d12),
    }


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    backends = kernels.available_backends()
    if "compiled" not in backends:
        print("compiled extension not built; only the Python fallback is available")
    print(f"{'kernel':<28}" + "".join(f"{b:>14}" for b in backends) + ("     speed-up  match" if len(backends) > 1 else ""))
    for name, fn in _cases(args.seed).items():
        times, outs = [], []
        for b in backends:
            mod = kernels.get_backend(b)
            outs.append(fn(mod))
            times.append(min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat)))
        line = f"{name:<28}" + "".join(f"{1e3 * t:>11.2f} ms" for t in times)
        if len(backends) > 1:
            line += f"{times[0] / times[1]:>12.1f}x  {'yes' if _same(outs[0], outs[1]) else 'NO'}"
        print(line)


if __name__ == "__main__":
    main()
