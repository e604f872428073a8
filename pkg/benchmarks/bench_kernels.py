#!/usr/bin/env python3
"""Benchmark the two implementations of each hot kernel in ``otpush._kernels``.

Each kernel ships as a scalar-loop variant (compiled with numba when it is
available) and a vectorized NumPy variant.  This script times both on the
same random instances and prints a table of median wall-clock times plus the
speedup of the compiled path over the NumPy path.

Run from the repository root::

    python benchmarks/bench_kernels.py
    python benchmarks/bench_kernels.py --ssp-sizes 32 64 128 --repeats 5

When numba is unavailable (or ``OTPUSH_NUMBA=0`` is set) the scalar variant
runs as pure Python; the table then shows why the package prefers the JIT
path when it can get it.  JIT compile time is excluded by a warm-up call.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from otpush import _kernels as K


def _median_time(fn, args, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def _ssp_instance(rng, n, m):
    cost = rng.uniform(0.0, 1.0, (n, m))
    # integer supplies/demands with equal totals, every node positive
    supply = rng.integers(1, 20, n).astype(np.int64)
    demand = rng.integers(1, 20, m).astype(np.int64)
    total = max(supply.sum(), demand.sum())
    supply[0] += total - supply.sum()
    demand[0] += total - demand.sum()
    return cost, supply, demand


def _activity_instance(rng, k, npts, eta):
    slopes = rng.standard_normal((k, 2))
    intercepts = rng.standard_normal(k)
    points = rng.uniform(-1.0, 1.0, (npts, 2))
    probes = K.boundary_probes(2)
    return slopes, intercepts, points, eta, probes, 1e-9


def _scalar_ssp(cost, supply, demand, max_iters):
    if K.NUMBA_ACTIVE:
        return K.ssp_flow(cost, supply, demand, max_iters)
    return K._ssp_flow_scalar(cost, supply, demand, max_iters)


def _scalar_activity(*args):
    if K.NUMBA_ACTIVE:
        return K.ball_activity_2d(*args)
    return K._ball_activity_2d_scalar(*args)


def _print_table(title, header, rows):
    widths = [max(len(header[c]), *(len(r[c]) for r in rows))
              for c in range(len(header))]
    line = "  ".join(h.ljust(w) for h, w in zip(header, widths))
    print(f"\n{title}")
    print(line)
    print("-" * len(line))
    for r in rows:
        print("  ".join(v.rjust(w) if c else v.ljust(w)
                        for c, (v, w) in enumerate(zip(r, widths))))


def bench_ssp(sizes, repeats, rng):
    rows = []
    for n in sizes:
        cost, supply, demand = _ssp_instance(rng, n, n)
        max_iters = 50 * n
        # warm-up (includes JIT compilation on the first call) + parity check
        f_s, *_ = _scalar_ssp(cost, supply, demand, max_iters)
        f_n, *_ = K._ssp_flow_numpy(cost, supply, demand, max_iters)
        val_s = float((f_s * cost).sum())
        val_n = float((f_n * cost).sum())
        if abs(val_s - val_n) > 1e-9 * (1.0 + abs(val_n)):
            raise AssertionError(
                f"kernel mismatch at n={n}: {val_s!r} vs {val_n!r}")
        t_s = _median_time(_scalar_ssp, (cost, supply, demand, max_iters),
                           repeats)
        t_n = _median_time(K._ssp_flow_numpy,
                           (cost, supply, demand, max_iters), repeats)
        rows.append([f"{n}x{n}", f"{t_s * 1e3:.2f}", f"{t_n * 1e3:.2f}",
                     f"{t_n / t_s:.2f}x"])
    return rows


def bench_activity(shapes, repeats, rng):
    rows = []
    for k, npts in shapes:
        args = _activity_instance(rng, k, npts, eta=0.05)
        lo_s, hi_s, amb_s = _scalar_activity(*args)
        lo_n, hi_n, amb_n = K._ball_activity_2d_numpy(*args)
        if not (np.array_equal(lo_s, lo_n) and np.array_equal(hi_s, hi_n)
                and np.array_equal(amb_s, amb_n)):
            raise AssertionError(f"kernel mismatch at k={k}, npts={npts}")
        t_s = _median_time(_scalar_activity, args, repeats)
        t_n = _median_time(K._ball_activity_2d_numpy, args, repeats)
        rows.append([f"k={k}, {npts} pts", f"{t_s * 1e3:.2f}",
                     f"{t_n * 1e3:.2f}", f"{t_n / t_s:.2f}x"])
    return rows


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--ssp-sizes", type=int, nargs="+",
                        default=[32, 64, 128, 256],
                        help="square transportation instance sizes")
    parser.add_argument("--activity-points", type=int, nargs="+",
                        default=[1_000, 10_000, 40_000],
                        help="query batch sizes for the activity scan")
    parser.add_argument("--pieces", type=int, default=12,
                        help="affine piece count for the activity scan")
    parser.add_argument("--repeats", type=int, default=5,
                        help="timing repeats (median reported)")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    jit = "numba JIT" if K.NUMBA_ACTIVE else "pure Python"
    print(f"scalar kernel path: {jit} (OTPUSH_NUMBA=0 forces the fallback)")
    print(f"repeats per cell: {args.repeats} (median reported)")

    header = ["instance", "scalar ms", "numpy ms", "scalar speedup"]
    _print_table("ssp_flow: min-cost transportation flow", header,
                 bench_ssp(args.ssp_sizes, args.repeats, rng))
    shapes = [(args.pieces, npts) for npts in args.activity_points]
    _print_table("ball_activity_2d: active-piece bracketing", header,
                 bench_activity(shapes, args.repeats, rng))


if __name__ == "__main__":
    main()
