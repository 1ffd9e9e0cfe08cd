"""Benchmark the compiled kernels against the NumPy fallbacks.

Usage: python benchmarks/bench_kernels.py [--repeats N]

Runs each hot kernel on a realistic workload with both backends and
prints a timing table. The compiled backend is skipped (with a note)
when the extension is not built.
"""

import argparse
import time

import numpy as np

from protocl import kernels
from protocl.kernels import (_np_cosine_matrix, _np_fold_mean,
                             _np_sqeuclidean_matrix, _np_standard_normals)


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def native_fold(rows, vectors, num_rows, dim):
    from protocl._native import _kernels
    counts = np.zeros(num_rows, dtype=np.int64)
    means = np.zeros((num_rows, dim), dtype=np.float64)
    _kernels.fold_mean_f32(rows, vectors, counts, means)


def numpy_fold(rows, vectors, num_rows, dim):
    counts = np.zeros(num_rows, dtype=np.int64)
    means = np.zeros((num_rows, dim), dtype=np.float64)
    _np_fold_mean(rows, vectors, counts, means)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    queries = rng.standard_normal((10_000, 768))
    means = rng.standard_normal((100, 768))
    rows = rng.integers(0, 100, size=100_000).astype(np.int64)
    stream = rng.standard_normal((100_000, 768), dtype=np.float32)
    stream = np.ascontiguousarray(stream)

    workloads = [
        ("sqeuclidean 10k x 100 x 768",
         lambda: kernels._native.sqeuclidean_matrix(queries, means)
         if kernels.using_native() else None,
         lambda: _np_sqeuclidean_matrix(queries, means)),
        ("cosine 10k x 100 x 768",
         lambda: kernels._native.cosine_matrix(queries, means)
         if kernels.using_native() else None,
         lambda: _np_cosine_matrix(queries, means)),
        ("fold_mean 100k x 768 (f32)",
         lambda: native_fold(rows, stream, 100, 768)
         if kernels.using_native() else None,
         lambda: numpy_fold(rows, stream, 100, 768)),
        ("standard_normals 2M",
         lambda: kernels._native.standard_normals(7, 2_000_000)
         if kernels.using_native() else None,
         lambda: _np_standard_normals(7, 200_000)),  # 10x smaller, see note
    ]

    print(f"backend available: {kernels.BACKEND}")
    print(f"{'kernel':34} {'native':>12} {'numpy/pure':>12} {'speedup':>9}")
    for name, native_fn, fallback_fn in workloads:
        scale = 1.0
        if name.startswith("standard_normals") and kernels.using_native():
            scale = 10.0  # fallback timed on a 10x smaller draw
        t_np = best_of(fallback_fn, args.repeats) * scale
        if kernels.using_native():
            t_nat = best_of(native_fn, args.repeats)
            print(f"{name:34} {t_nat * 1e3:10.1f}ms {t_np * 1e3:10.1f}ms "
                  f"{t_np / t_nat:8.1f}x")
        else:
            print(f"{name:34} {'(not built)':>12} {t_np * 1e3:10.1f}ms {'':>9}")
    if not kernels.using_native():
        print("\ncompiled extension missing; rebuild with "
              "`pip install -e . --no-build-isolation` to compare")


if __name__ == "__main__":
    main()
