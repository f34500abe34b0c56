"""Compare the compiled kernels with their numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints best-of-``repeat`` wall time per kernel and backend, and the speedup.
"""

import argparse
import importlib
import timeit

import numpy as np

from gse_lab import _kernels_py


def workloads(rng):
    W = rng.dirichlet(np.ones(10), size=20_000)
    orders = np.array([0.5, 1.0, 2.0, 4.0])
    small = rng.standard_normal((50_000, 3, 3))
    mid = rng.standard_normal((20_000, 6, 6))
    A = rng.standard_normal((10, 10))
    return {
        "batch_gse 20000x10, 4 orders": lambda k: k.batch_gse(W, orders),
        "det_stack 50000 3x3": lambda k: k.det_stack(small),
        "det_stack 20000 6x6": lambda k: k.det_stack(mid),
        "principal_minors 10x10 (1024)": lambda k: k.principal_minors(A),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    try:
        compiled = importlib.import_module("gse_lab._kernels")
    except ImportError:
        compiled = None
        print("compiled extension not built; timing the fallback only")
    rng = np.random.default_rng(0)
    print(f"{'kernel':34s} {'python s':>10s} {'cython s':>10s} {'speedup':>8s}")
    for name, fn in workloads(rng).items():
        t_py = min(timeit.repeat(lambda: fn(_kernels_py), number=1, repeat=args.repeat))
        if compiled is None:
            print(f"{name:34s} {t_py:10.4f} {'-':>10s} {'-':>8s}")
            continue
        t_cy = min(timeit.repeat(lambda: fn(compiled), number=1, repeat=args.repeat))
        print(f"{name:34s} {t_py:10.4f} {t_cy:10.4f} {t_py / t_cy:7.1f}x")


if __name__ == "__main__":
    main()
