"""Benchmark the compiled kernels against their pure-numpy fallbacks.

Run:  python3 benchmarks/bench_kernels.py [--sizes 50,200,500] [--repeats 20]

The compiled path is what the package uses by default; setting
BNNVERIFY_NO_NUMBA selects the fallback at import time. Here we call
both implementations directly so a single process can compare them.
"""

import argparse
import time

import numpy as np

from bnnverify._kernels import (
    USE_NUMBA,
    _affine_interval_nb,
    _affine_interval_np,
    _pivot_nb,
    _pivot_np,
)


def time_fn(fn, args, repeats):
    fn(*args)  # warm-up (JIT compile / cache load)
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_pivot(n, repeats, rng):
    tableau = rng.standard_normal((n, n + 5))
    tableau[n // 2, n // 3] = 2.0
    args_np = (tableau.copy(), n // 2, n // 3)
    args_nb = (tableau.copy(), n // 2, n // 3)
    t_np = time_fn(_pivot_np, args_np, repeats)
    t_nb = time_fn(_pivot_nb, args_nb, repeats) if _pivot_nb else None
    return t_np, t_nb


def bench_affine(n, repeats, rng):
    w = rng.standard_normal((n, n))
    b = rng.standard_normal(n)
    lo = -rng.random(n)
    hi = rng.random(n)
    t_np = time_fn(_affine_interval_np, (w, b, lo, hi), repeats)
    t_nb = (
        time_fn(_affine_interval_nb, (w, b, lo, hi), repeats)
        if _affine_interval_nb
        else None
    )
    return t_np, t_nb


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", default="50,200,500")
    ap.add_argument("--repeats", type=int, default=20)
    args = ap.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]
    rng = np.random.default_rng(7)

    print(f"numba available: {_pivot_nb is not None}; package uses numba: {USE_NUMBA}")
    print(f"{'kernel':<18}{'n':>6}{'numpy (us)':>14}{'numba (us)':>14}{'speedup':>10}")
    for name, bench in (("pivot", bench_pivot), ("affine_interval", bench_affine)):
        for n in sizes:
            t_np, t_nb = bench(n, args.repeats, rng)
            if t_nb is None:
                print(f"{name:<18}{n:>6}{t_np * 1e6:>14.1f}{'n/a':>14}{'n/a':>10}")
            else:
                print(
                    f"{name:<18}{n:>6}{t_np * 1e6:>14.1f}{t_nb * 1e6:>14.1f}"
                    f"{t_np / t_nb:>9.1f}x"
                )


if __name__ == "__main__":
    main()
