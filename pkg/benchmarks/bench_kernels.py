"""Benchmark the compiled kernels against the pure-numpy fallback.

Run twice to compare paths:

    python3 benchmarks/bench_kernels.py                 # numba-compiled
    TILESHIFT_NO_NUMBA=1 python3 benchmarks/bench_kernels.py   # fallback

Each benchmark reports the best of several repeats; the first compiled call
is excluded (JIT warm-up).
"""

import time

import numpy as np

from tileshift import kernels
from tileshift.assignment import CopySpec, CostMatrix, solve_rectangular


def best_of(fn, repeats=5):
    fn()  # warm-up (JIT compile on the numba path)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_tile_costs(n_tiles=256, tile_values=192):
    rng = np.random.default_rng(0)
    ta = rng.random((n_tiles, tile_values)).astype(np.float32)
    tb = rng.random((n_tiles, tile_values)).astype(np.float32)
    if kernels.NUMBA_ENABLED:
        return best_of(lambda: kernels.tile_cost_kernel(ta, tb))
    return best_of(lambda: kernels.tile_cost_numpy(ta, tb))


def bench_assignment(n=256):
    rng = np.random.default_rng(1)
    cost = CostMatrix(rng.random((n, n)))
    copies = CopySpec.uniform(n, 1)
    return best_of(lambda: solve_rectangular(cost, copies), repeats=3)


def main():
    path = "numba-compiled" if kernels.NUMBA_ENABLED else "pure-numpy fallback"
    print(f"kernel path: {path}")
    t = bench_tile_costs()
    print(f"tile cost matrix, 256x256 tiles of 192 values: {t * 1e3:8.2f} ms")
    t = bench_assignment()
    print(f"assignment solve, 256x256 with tie-break:      {t * 1e3:8.2f} ms")
    print("(set TILESHIFT_NO_NUMBA=1 to time the fallback path)")


if __name__ == "__main__":
    main()
