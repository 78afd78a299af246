"""Compare the numba kernels with their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5]

The JIT path is timed after one warm-up call (compilation excluded). Setting
THERMOFIELD_DISABLE_JIT=1 only changes which path the library dispatches to;
this script calls both implementations directly.
"""
import argparse
import time

import numpy as np

from thermofield import _jit, kernels
from thermofield.dyson import enumerate_pairings


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    M, n = 16, 4
    table = kernels.count_table(M, n)
    dim = int(table[M, n])
    states = kernels._enumerate_np(M, n)
    pairings = enumerate_pairings(12)
    rng = np.random.default_rng(0)
    w = np.triu(rng.normal(size=(12, 12)), 1)
    return [
        (f"enumerate_states M={M} n={n}",
         lambda: kernels._enumerate_jit(M, n, dim), lambda: kernels._enumerate_np(M, n)),
        (f"rank_states dim={dim}",
         lambda: kernels._rank_jit(states, table, n), lambda: kernels._rank_np(states, table, n)),
        (f"ladder_table dim={dim}",
         lambda: kernels._ladder_jit(states, table, n), lambda: kernels._ladder_np(states, table, n)),
        (f"pairing_sum 2N=12 ({len(pairings)} pairings)",
         lambda: kernels._pairing_sum_jit(pairings, w), lambda: kernels._pairing_sum_np(pairings, w)),
    ]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _jit.JIT_ENABLED:
        print("numba unavailable or disabled; the jit column times the interpreted kernels")
    print(f"{'kernel':42s} {'jit [ms]':>10s} {'numpy [ms]':>11s} {'speedup':>8s}")
    for name, fast, slow in cases():
        fast()  # compile
        a = best_of(fast, args.repeat)
        b = best_of(slow, args.repeat)
        print(f"{name:42s} {1e3 * a:10.2f} {1e3 * b:11.2f} {b / a:8.1f}x")


if __name__ == "__main__":
    main()
