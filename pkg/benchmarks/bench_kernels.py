#!/usr/bin/env python3
"""Backend benchmark: numba-compiled kernels against the numpy fallback.

Run from the repository root:

    python3 benchmarks/bench_kernels.py [--repeats 20]

Both implementation modules are imported directly, so the comparison
does not depend on DOIEDWARDS_DISABLE_NUMBA.  The first numba call pays
JIT compilation; a warm-up pass keeps that out of the timings.  Each
row also reports the max absolute discrepancy between the backends.
"""

import argparse
import time

import numpy as np

from doiedwards.kernels import _numpy_impl

try:
    from doiedwards.kernels import _numba_impl
except ImportError:
    _numba_impl = None


def best_of(fn, args, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def discrepancy(a, b):
    if isinstance(a, tuple):
        return max(discrepancy(x, y) for x, y in zip(a, b))
    return float(np.abs(np.asarray(a) - np.asarray(b)).max())


def main(argv=None):
    ap = argparse.ArgumentParser(description="Time numba kernels against numpy.")
    ap.add_argument("--repeats", type=int, default=20, help="passes per case")
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    cases = []
    for degree in (8, 16, 32):
        x = np.cos(np.linspace(0.05, np.pi - 0.05, 4 * degree))
        cases.append(("legendre_tables L=%d" % degree, "legendre_tables", (x, degree)))
    c = rng.standard_normal(64) / np.arange(1.0, 65.0)
    for n_out in (256, 1024, 4096):
        cases.append(
            (
                "trig_weight_matrix n=%d" % n_out,
                "trig_weight_matrix",
                (0.7, c, 32, n_out),
            )
        )

    print("%-26s %12s %12s %9s %10s" % ("case", "numpy [ms]", "numba [ms]", "speedup", "agree"))
    for label, fname, fargs in cases:
        f_np = getattr(_numpy_impl, fname)
        t_np = best_of(f_np, fargs, args.repeats)
        if _numba_impl is None:
            print("%-26s %12.3f %12s" % (label, 1e3 * t_np, "n/a"))
            continue
        f_nb = getattr(_numba_impl, fname)
        f_nb(*fargs)
        t_nb = best_of(f_nb, fargs, args.repeats)
        diff = discrepancy(f_np(*fargs), f_nb(*fargs))
        print(
            "%-26s %12.3f %12.3f %8.1fx %10.1e"
            % (label, 1e3 * t_np, 1e3 * t_nb, t_np / t_nb, diff)
        )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
