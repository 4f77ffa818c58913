"""Timing comparison of the compiled tree core against the pure-Python
fallback on the three hot kernels: tree growth, leaf routing, and kernel
accumulation.

Run as ``python3 benchmarks/bench_backends.py [--n 2000] [--d 10] [--reps 5]``.
Both backends are imported directly (bypassing the import-time selection in
scate.cart), so the script works regardless of SCATE_PURE_PYTHON.
"""

import argparse
import time

import numpy as np

from scate import _treecore_py
from scate.rng import SplitMix64, derive

try:
    from scate import _treecore
except ImportError:
    _treecore = None


def _median_time(fn, reps):
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def bench(core, X, y, order, leaf_mat, query_leaf, reps):
    seed = derive(0, "bench-tree")
    raw = core.grow(X, y, order, 12, 1, X.shape[1], 0.0, seed)
    feature, threshold, left, right = raw[0], raw[1], raw[2], raw[3]
    n = X.shape[0]
    K = np.zeros((n, n))
    Kc = np.zeros((query_leaf.shape[1], n))
    return {
        "grow": _median_time(
            lambda: core.grow(X, y, order, 12, 1, X.shape[1], 0.0, seed), reps),
        "route": _median_time(
            lambda: core.route(feature, threshold, left, right, X), reps),
        "accumulate_kernel": _median_time(
            lambda: core.accumulate_kernel(K, leaf_mat), reps),
        "accumulate_cross": _median_time(
            lambda: core.accumulate_cross(Kc, leaf_mat, query_leaf), reps),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--d", type=int, default=10)
    ap.add_argument("--trees", type=int, default=25,
                    help="trees per kernel accumulation")
    ap.add_argument("--reps", type=int, default=5)
    args = ap.parse_args()

    rng = SplitMix64(derive(0, "bench-data"))
    X = rng.uniform(args.n * args.d).reshape(args.n, args.d)
    y = rng.normal(args.n)
    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)

    # Leaf matrices for the accumulation kernels: random balanced leaves.
    n_leaves = 64
    leaf_mat = (rng.uniform(args.trees * args.n).reshape(args.trees, args.n)
                * n_leaves).astype(np.int64)
    query_leaf = (rng.uniform(args.trees * 500).reshape(args.trees, 500)
                  * n_leaves).astype(np.int64)

    results = {"fallback": bench(_treecore_py, X, y, order, leaf_mat,
                                 query_leaf, args.reps)}
    if _treecore is not None:
        results["compiled"] = bench(_treecore, X, y, order, leaf_mat,
                                    query_leaf, args.reps)
    else:
        print("compiled backend unavailable; showing fallback only")

    kernels = ["grow", "route", "accumulate_kernel", "accumulate_cross"]
    header = f"{'kernel':<20}" + "".join(f"{b:>14}" for b in results)
    if len(results) == 2:
        header += f"{'speedup':>10}"
    print(f"n={args.n} d={args.d} trees={args.trees} reps={args.reps}, "
          f"median seconds")
    print(header)
    for k in kernels:
        row = f"{k:<20}" + "".join(f"{results[b][k]:>14.6f}" for b in results)
        if len(results) == 2:
            row += f"{results['fallback'][k] / results['compiled'][k]:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
