"""Time the numpy and numba versions of each hot kernel.

    python3 benchmarks/bench_kernels.py [--repeat N]

The numba column is reported after one warm-up call so JIT compilation is
excluded. Outputs of the two backends are checked for agreement first.
"""
import argparse
import timeit

import numpy as np

from cpaudit import _kernels as K


def cases():
    rng = np.random.default_rng(0)
    seeds = np.arange(10**6, dtype=np.uint64)
    u = rng.uniform(1e-12, 1 - 1e-12, 10**6)
    z = rng.normal(size=10**6)
    X = rng.normal(size=(2000, 4))
    y = X @ [1.0, -1.0, 0.5, 0.0] + rng.normal(size=2000)
    M = rng.normal(size=(2000, 1000))
    return [
        ("counter_bits 1e6", lambda: K.counter_bits_np(np.uint64(7), seeds),
         lambda: K.counter_bits_nb(np.uint64(7), seeds)),
        ("child_seeds 1e6", lambda: K.child_seeds_np(7, seeds),
         lambda: K.child_seeds_nb(7, seeds)),
        ("ndtri 1e6", lambda: K.ndtri_np(u), lambda: K.ndtri_nb(u)),
        ("ndtr 1e6", lambda: K.ndtr_np(z), lambda: K.ndtr_nb(z)),
        ("pinball 2000x4, 500 steps", lambda: K.pinball_descent_np(X, y, 0.9, 500, 0.05),
         lambda: K.pinball_descent_nb(X, y, 0.9, 500, 0.05)),
        ("row_variance 2000x1000", lambda: K.row_variance_np(M), lambda: K.row_variance_nb(M)),
    ]


def agree(a, b):
    if isinstance(a, tuple):
        return all(agree(x, y) for x, y in zip(a, b))
    a, b = np.asarray(a), np.asarray(b)
    if a.dtype == np.uint64:
        return np.array_equal(a, b)
    return np.allclose(a, b, rtol=1e-12, atol=1e-12)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if K.numba is None:
        raise SystemExit("numba is not installed; nothing to compare")
    print(f"{'kernel':<28}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}  agree")
    for name, f_np, f_nb in cases():
        ok = agree(f_np(), f_nb())  # also warms up the JIT
        t_np = min(timeit.repeat(f_np, number=1, repeat=args.repeat)) * 1e3
        t_nb = min(timeit.repeat(f_nb, number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<28}{t_np:>12.2f}{t_nb:>12.2f}{t_np / t_nb:>9.1f}x  {ok}")


if __name__ == "__main__":
    main()
