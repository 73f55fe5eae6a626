"""Compare the compiled and NumPy kernel backends.

Times the two hot paths: the estimating-equation scan used by the solver
(many thetas against one sample) and the batched bisection used by the
brute-force attack oracle (many perturbed samples at once).

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from advrobust import _pykernels, kernels

try:
    from advrobust import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def cases(rng):
    x = rng.standard_normal(20_000)
    thetas = np.linspace(-1.0, 1.0, 512)
    rows = 1.0 + rng.standard_normal((9261, 3)) * 0.1
    lo, hi = rows.min(axis=1), rows.max(axis=1)
    yield "sums  huber   N=2e4 x 512", lambda m: m.estimating_sums(kernels.HUBER, 1.5, x, thetas)
    yield "sums  scale   N=2e4 x 512", lambda m: m.estimating_sums(kernels.GAUSS_SCALE, 0.0, np.abs(x), np.abs(thetas) + 0.5)
    yield "roots huber   9261 x N=3", lambda m: m.batch_roots(kernels.HUBER, 1.5, rows, lo, hi, 1e-13)
    yield "roots mean    9261 x N=3", lambda m: m.batch_roots(kernels.MEAN, 0.0, rows, lo, hi, 1e-13)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'case':28s} {'numpy [ms]':>11s} {'cython [ms]':>12s} {'speedup':>8s}  max|diff|")
    for name, fn in cases(rng):
        t_py = min(timeit.repeat(lambda: fn(_pykernels), number=1, repeat=args.repeat)) * 1e3
        if _ckernels is None:
            print(f"{name:28s} {t_py:11.2f} {'n/a':>12s}")
            continue
        t_c = min(timeit.repeat(lambda: fn(_ckernels), number=1, repeat=args.repeat)) * 1e3
        diff = float(np.max(np.abs(np.asarray(fn(_pykernels)) - np.asarray(fn(_ckernels)))))
        print(f"{name:28s} {t_py:11.2f} {t_c:12.2f} {t_py / t_c:7.1f}x  {diff:.2e}")


if __name__ == "__main__":
    main()
