"""Time the compiled kernels against the numpy/scipy fallback.

    python benchmarks/bench_kernels.py [--n 512 2048 8192] [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from chemo4d._backend import get_kernels
from chemo4d.core import build_grid


def cases(n):
    g = build_grid(20.0, n)
    rng = np.random.default_rng(0)
    u = np.abs(rng.normal(size=n))
    v = rng.normal(size=n)
    off = np.ascontiguousarray(1e-3 * g.k_off)
    diag = g.weights + 1e-3 * g.k_diag
    return {
        "tridiag_solve": lambda k: k.tridiag_solve(off, diag, off, u),
        "advective_flux": lambda k: k.advective_flux(u, v, g.areas, 1 / g.h, True),
        "cn_propagate(64)": lambda k: k.cn_propagate(g.k_off, g.k_diag, g.weights, 1e-4, u, 64, 1.0),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, nargs="+", default=[512, 2048, 8192])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    py = get_kernels("python")
    try:
        cy = get_kernels("cython")
    except ImportError:
        cy = None
        print("compiled kernels not built; timing the fallback only")
    print(f"{'kernel':<18}{'n':>7}{'python [us]':>14}{'cython [us]':>14}{'speedup':>10}")
    for n in args.n:
        for name, fn in cases(n).items():
            def best(k):
                t = timeit.Timer(lambda: fn(k))
                number, _ = t.autorange()
                return min(t.repeat(args.repeat, number)) / number * 1e6
            tp = best(py)
            if cy is None:
                print(f"{name:<18}{n:>7}{tp:>14.1f}{'-':>14}{'-':>10}")
            else:
                tc = best(cy)
                print(f"{name:<18}{n:>7}{tp:>14.1f}{tc:>14.1f}{tp / tc:>9.1f}x")


if __name__ == "__main__":
    main()
