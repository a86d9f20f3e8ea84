"""Time the compiled kernels against the numpy fallback and the full Euler loop.

Run: python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from msde import _kernels_py
from msde.fields import brownian, build_drift_inverse
from msde.simulate import simulate_paths

try:
    from msde import _kernels
except ImportError:
    _kernels = None


def _cases():
    rng = np.random.default_rng(0)
    paths = np.cumsum(rng.normal(scale=0.03, size=(4096, 1001, 2)), axis=1)
    dw = rng.normal(scale=0.03, size=(4096, 100, 1))
    masks = np.ones((2, 100))
    ks = np.zeros(2, dtype=np.int64)
    ids = np.arange(4096, dtype=np.int64)
    return {
        "standard_normals 4096x100x2": lambda k: k.standard_normals(1, ids, 0, 100, 2),
        "first_exit 4096x1001": lambda k: k.first_exit(paths, np.zeros(2), 0.5, 1000),
        "window_sup_moment w=32": lambda k: k.window_sup_moment(paths, 32, 2.0),
        "iterated_sum m=2": lambda k: k.iterated_sum(dw, masks, ks),
    }


def _best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    print(f"{'kernel':32s} {'numpy [ms]':>11s} {'cython [ms]':>12s} {'speedup':>8s}")
    for name, call in _cases().items():
        slow = _best(lambda: call(_kernels_py), args.repeat) * 1e3
        if _kernels is None:
            print(f"{name:32s} {slow:11.2f} {'n/a':>12s} {'':>8s}")
            continue
        fast = _best(lambda: call(_kernels), args.repeat) * 1e3
        print(f"{name:32s} {slow:11.2f} {fast:12.2f} {slow / fast:7.1f}x")

    print()
    for label, field, cap in (("brownian d=2", brownian(2), None), ("inverse drift d=2", build_drift_inverse(1.0, 2), 10.0)):
        t = _best(lambda: simulate_paths(field, 0.0, [0.1, 0.0], 1.0, 1e-3, 10000, seed=1, drift_cap=cap).paths,
                  max(1, args.repeat // 2))
        print(f"euler {label:22s} M=1e4 K=1000: {t:.2f} s ({1e4 * 1e3 / t / 1e6:.1f} M steps/s)")


if __name__ == "__main__":
    main()
