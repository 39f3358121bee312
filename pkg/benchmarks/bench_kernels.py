"""Compiled vs pure-Python box-QP kernel on random strictly convex problems.

    python3 benchmarks/bench_kernels.py [--reps 2000] [--dims 1 2 4 8 16]
"""
import argparse
import timeit

import numpy as np

from implicitdpc import _boxqp_py

try:
    from implicitdpc import _boxqp
except ImportError:
    _boxqp = None


def problems(n, count, seed):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        A = rng.standard_normal((n, n))
        H = np.ascontiguousarray(A @ A.T + 0.1 * np.eye(n))
        out.append((H, 4.0 * rng.standard_normal(n), -np.ones(n), np.ones(n)))
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--reps", type=int, default=2000)
    ap.add_argument("--dims", type=int, nargs="+", default=[1, 2, 4, 8, 16])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if _boxqp is None:
        print("compiled kernel not built; only the Python kernel is timed")
    print(f"{'n':>4} {'python us':>11} {'cython us':>11} {'speedup':>8} {'max |dx|':>10}")
    for n in args.dims:
        probs = problems(n, args.reps, args.seed)
        max_iter = 50 * (n + 1)
        t_py = timeit.timeit(lambda: [_boxqp_py.box_qp(*p, max_iter) for p in probs], number=1)
        if _boxqp is None:
            print(f"{n:>4} {1e6 * t_py / args.reps:>11.2f} {'-':>11} {'-':>8} {'-':>10}")
            continue
        t_cy = timeit.timeit(lambda: [_boxqp.box_qp(*p, max_iter) for p in probs], number=1)
        dx = max(float(np.abs(_boxqp_py.box_qp(*p, max_iter)[0] - _boxqp.box_qp(*p, max_iter)[0]).max())
                 for p in probs[:200])
        print(f"{n:>4} {1e6 * t_py / args.reps:>11.2f} {1e6 * t_cy / args.reps:>11.2f} "
              f"{t_py / t_cy:>8.1f} {dx:>10.1e}")


if __name__ == "__main__":
    main()
