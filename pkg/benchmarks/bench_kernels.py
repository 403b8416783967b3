#!/usr/bin/env python3
"""Benchmark: numpy kernels vs numba-jitted kernels.

Times the three transform kernels (bucketize, hash-mod, log1p) on
identical inputs under both backends and prints per-kernel speedups.

Usage:
    python benchmarks/bench_kernels.py [--rows N] [--repeats N]
                                       [--boundaries N] [--modulus N]
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass

import numpy as np

from recprep.kernels import numpy_backend
from recprep.schema import quantile_boundaries
from recprep.transforms import FNV_OFFSET_BASIS

try:
    from recprep.kernels import numba_backend
except ImportError:
    numba_backend = None


@dataclass
class KernelResult:
    backend: str
    kernel: str
    time_s: float
    melems_per_s: float


def median_time(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def bench_backend(backend, name: str, data: dict, repeats: int) -> list[KernelResult]:
    values, ids, boundaries, seed_state, modulus = (
        data["values"], data["ids"], data["boundaries"],
        data["seed_state"], data["modulus"],
    )
    n = len(values)

    # first call pays any compilation cost; keep it out of the timings
    backend.bucketize_block(values[:128], boundaries)
    backend.hash_mod_block(ids[:128], seed_state, modulus)
    backend.log1p_block(values[:128])

    results = []
    for kernel, fn in (
        ("bucketize", lambda: backend.bucketize_block(values, boundaries)),
        ("hash_mod", lambda: backend.hash_mod_block(ids, seed_state, modulus)),
        ("log1p", lambda: backend.log1p_block(values)),
    ):
        t = median_time(fn, repeats)
        results.append(KernelResult(name, kernel, t, n / t / 1e6))
    return results


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--rows", type=int, default=2_000_000)
    parser.add_argument("--repeats", type=int, default=7)
    parser.add_argument("--boundaries", type=int, default=1024)
    parser.add_argument("--modulus", type=int, default=500_000)
    args = parser.parse_args()

    rng = np.random.Generator(np.random.PCG64(42))
    data = {
        "values": rng.uniform(0.0, 1.0e6, args.rows).astype(np.float32),
        "ids": rng.integers(0, 1 << 63, args.rows, dtype=np.uint64),
        "boundaries": quantile_boundaries(args.boundaries),
        "seed_state": np.uint64(FNV_OFFSET_BASIS),
        "modulus": np.uint64(args.modulus),
    }

    print(f"rows={args.rows} repeats={args.repeats} "
          f"boundaries={args.boundaries} modulus={args.modulus}")

    results = bench_backend(numpy_backend, "numpy", data, args.repeats)
    if numba_backend is not None:
        results += bench_backend(numba_backend, "numba", data, args.repeats)
    else:
        print("numba unavailable; timing the numpy backend only")

    print(f"\n{'backend':<8} {'kernel':<10} {'time':>10} {'Melem/s':>10}")
    for r in results:
        print(f"{r.backend:<8} {r.kernel:<10} {r.time_s * 1e3:>8.2f}ms {r.melems_per_s:>10.1f}")

    if numba_backend is not None:
        print()
        for kernel in ("bucketize", "hash_mod", "log1p"):
            np_t = next(r.time_s for r in results if r.backend == "numpy" and r.kernel == kernel)
            nb_t = next(r.time_s for r in results if r.backend == "numba" and r.kernel == kernel)
            print(f"{kernel}: numba is {np_t / nb_t:.2f}x the numpy backend")
    return 0


if __name__ == "__main__":
    sys.exit(main())
