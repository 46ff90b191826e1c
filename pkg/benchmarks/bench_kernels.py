"""Compiled vs numpy timings of the hot kernels.

Run with ``python benchmarks/bench_kernels.py``. Each kernel is called once
to trigger compilation, then timed over several repeats; outputs of both
paths are compared for bitwise equality.
"""

import argparse
import time

import numpy as np

from frd import kernels


def timed(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases(rng, size):
    deg = 400
    coeffs = rng.standard_normal(deg)
    x = rng.uniform(-1, 1, size)
    table = rng.standard_normal((size, 25))
    local = rng.uniform(-1, 1, size)
    P, m = size // 16, 3
    mu = np.sort(rng.uniform(0.1, 4.0, (P, m)), axis=1)
    mu[::7, 1] = mu[::7, 0]
    f, fp, fpp = np.exp(-mu), -np.exp(-mu), np.exp(-mu)
    return {
        "clenshaw": ((coeffs, x), kernels.clenshaw_numpy, kernels.clenshaw_numba),
        "clenshaw_rows": ((table, local), kernels.clenshaw_rows_numpy, kernels.clenshaw_rows_numba),
        "loewner1": ((mu, f, fp, 1e-7), kernels.loewner1_numpy, kernels.loewner1_numba),
        "loewner2": ((mu, f, fp, fpp, 1e-7), kernels.loewner2_numpy, None),
    }


def loewner2_numba(mu, f, fp, fpp, rtol):
    d1 = kernels.loewner1_numba(mu, f, fp, rtol)
    return kernels.loewner2_numba(mu, d1, fp, fpp, rtol)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=200000)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print("%-14s %12s %12s %9s %s" % ("kernel", "numpy [s]", "numba [s]", "speedup", "equal"))
    for name, (inp, np_fn, nb_fn) in cases(rng, args.size).items():
        nb_fn = nb_fn or loewner2_numba
        nb_fn(*inp)
        t_np, a = timed(lambda: np_fn(*inp), args.repeats)
        t_nb, b = timed(lambda: nb_fn(*inp), args.repeats)
        print("%-14s %12.5f %12.5f %9.1f %s" % (name, t_np, t_nb, t_np / t_nb, np.array_equal(a, b)))


if __name__ == "__main__":
    main()
