#!/usr/bin/env python3
"""Numba vs pure-numpy timings for the event-simulation kernels.

Kernel timings call both implementations directly. The end-to-end timing runs
a CHSH simulation in subprocesses with and without ETBELL_DISABLE_NUMBA=1.

    python3 benchmarks/bench_kernels.py [--hits N] [--repeat R]
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from etbell import kernels

E2E = (
    "import time;"
    "from etbell.events import GeometryConfig, run_chsh_experiment;"
    "from etbell.quantum import canonical_settings;"
    "cfg = GeometryConfig(visibility=0.9, detection_efficiency=1.0, pair_rate=5e6, dead_time=5e-8);"
    "run_chsh_experiment(cfg, canonical_settings(), 1000, seed=0);"  # warm-up / JIT
    "t = time.perf_counter();"
    "run_chsh_experiment(cfg, canonical_settings(), {n}, seed=1);"
    "print(time.perf_counter() - t)"
)


def best_of(f, repeat):
    out = []
    for _ in range(repeat):
        t = time.perf_counter()
        f()
        out.append(time.perf_counter() - t)
    return min(out)


def make_hits(n, rate, rng):
    t = np.cumsum(rng.exponential(1 / rate, n))
    det = rng.integers(0, 4, n).astype(np.int64)
    return t, det


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--hits", type=int, default=2_000_000)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--pairs", type=int, default=500_000, help="pairs per setting for the end-to-end run")
    args = p.parse_args()
    rng = np.random.default_rng(0)

    print(f"{'kernel':<28}{'numba [ms]':>12}{'numpy [ms]':>12}{'ratio':>8}")
    for label, rate, dead in [("dead time, sparse", 1e4, 1e-9), ("dead time, crowded", 2e8, 1e-8)]:
        t, det = make_hits(args.hits, rate, rng)
        kernels.dead_time_mask_numba(t[:10], det[:10], dead, 4)
        a = best_of(lambda: kernels.dead_time_mask_numba(t, det, dead, 4), args.repeat)
        b = best_of(lambda: kernels.dead_time_mask_numpy(t, det, dead, 4), args.repeat)
        print(f"{label:<28}{1e3 * a:>12.2f}{1e3 * b:>12.2f}{b / a:>8.1f}")

    ta = np.sort(rng.uniform(0, 1, args.hits // 2))
    tb = np.sort(rng.uniform(0, 1, args.hits // 2))
    for label, w in [("window join, 1 ns", 1e-9), ("window join, 1 us", 1e-6)]:
        kernels.window_join_numba(ta[:10], tb[:10], w)
        a = best_of(lambda: kernels.window_join_numba(ta, tb, w), args.repeat)
        b = best_of(lambda: kernels.window_join_numpy(ta, tb, w), args.repeat)
        print(f"{label:<28}{1e3 * a:>12.2f}{1e3 * b:>12.2f}{b / a:>8.1f}")

    times = {}
    for name, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, ETBELL_DISABLE_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", E2E.format(n=args.pairs)], env=env,
                             capture_output=True, text=True, check=True)
        times[name] = float(res.stdout.strip())
    print(f"{'CHSH run, 4 x %d pairs' % args.pairs:<28}{1e3 * times['numba']:>12.1f}"
          f"{1e3 * times['numpy']:>12.1f}{times['numpy'] / times['numba']:>8.1f}")


if __name__ == "__main__":
    main()
