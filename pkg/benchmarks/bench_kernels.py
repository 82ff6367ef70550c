#!/usr/bin/env python3
"""Benchmark the accelerated kernels against their pure-numpy fallbacks.

Run directly:

    python3 benchmarks/bench_kernels.py

The numba implementations are compared against the numpy ones in-process (both
backends are importable regardless of the CISMVMR_DISABLE_NUMBA setting).
"""

import argparse
import time

import numpy as np

from cismvmr import kernels


def timeit(fn, *args, repeat=5):
    fn(*args)  # warm-up (includes JIT compilation for the numba variants)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_omega(J, K, rng):
    sq = np.sqrt(rng.uniform(0.01, 0.05, size=(J, K)))
    a = rng.normal(size=(J, J + 5))
    cov = a @ a.T + J * np.eye(J)
    d = np.sqrt(np.diag(cov))
    rho = np.ascontiguousarray(cov / np.outer(d, d))
    theta = rng.normal(size=K)
    coef = np.ascontiguousarray(np.outer(theta, theta))
    return (timeit(kernels._omega_exposure_term_numpy, sq, rho, coef),
            timeit(kernels._omega_exposure_term_numba, sq, rho, coef))


def bench_prune(J, rng):
    pvals = rng.uniform(size=J)
    rho = np.abs(rng.uniform(-1, 1, size=(J, J)))
    rho = np.ascontiguousarray((rho + rho.T) / 2)
    return (timeit(kernels._greedy_prune_numpy, pvals, rho, 0.4),
            timeit(kernels._greedy_prune_numba, pvals, rho, 0.4))


def bench_regressions(n, J, rng):
    G = rng.standard_normal((n, J))
    y = G[:, 0] * 0.1 + rng.standard_normal(n)
    return (timeit(kernels._variant_regressions_numpy, G, y),
            timeit(kernels._variant_regressions_numba, G, y))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    rng = np.random.default_rng(args.seed)

    print(f"{'kernel':<38}{'numpy (ms)':>12}{'numba (ms)':>12}{'speedup':>10}")
    rows = []
    for J, K in ((100, 3), (300, 5)):
        rows.append((f"omega_exposure_term J={J} K={K}", *bench_omega(J, K, rng)))
    for J in (100, 1000):
        rows.append((f"greedy_prune J={J}", *bench_prune(J, rng)))
    for n, J in ((10000, 100), (50000, 200)):
        rows.append((f"variant_regressions n={n} J={J}", *bench_regressions(n, J, rng)))
    for name, t_np, t_nb in rows:
        print(f"{name:<38}{t_np * 1e3:>12.3f}{t_nb * 1e3:>12.3f}{t_np / t_nb:>10.2f}x")


if __name__ == "__main__":
    main()
