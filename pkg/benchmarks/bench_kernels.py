"""Compare the compiled kernels with the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat R] [--out results.csv]

Both backends run the same inputs; the script checks that the outputs agree
and prints median times per call and the speedup.
"""
import argparse
import sys
import timeit

import numpy as np

from minimax_spp._kernels import _pykernels

try:
    from minimax_spp._kernels import _ckernels
except ImportError:
    _ckernels = None


def _cases(rng):
    n = 12
    C = np.where(rng.random((n, n)) < 0.4, rng.uniform(1, 2, (n, n)), 0.0)
    np.fill_diagonal(C, 0.0)
    v = rng.standard_normal(200)
    hi = rng.uniform(0.5, 2.0, 200)
    b, dim = 10, 60
    h = rng.uniform(0.5, 2.0, (b, dim))
    u = rng.uniform(0.0, 1.0, dim)
    rhs = rng.standard_normal((b, dim))
    rows = rng.standard_normal((b, dim))
    return {
        "max_flow_dense": (lambda k: k.max_flow_dense(C, 0, n - 1)[0]),
        "capped_simplex_projection": (lambda k: k.capped_simplex_projection(v, 0.0, hi, 20.0)),
        "diag_structured_pcg": (lambda k: k.diag_structured_pcg(h, u, 0.05, 1e-8, rhs, 1e-12, 100)[0]),
        "ordered_row_mean": (lambda k: k.ordered_row_mean(rows)),
    }


def _time(fn, repeat):
    number = max(1, int(0.05 / max(timeit.timeit(fn, number=1), 1e-7)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--out", help="optional CSV file for the results")
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled kernels are not built; run `pip install -e . --no-build-isolation` first")
        return 1
    rows = []
    for name, call in _cases(np.random.default_rng(0)).items():
        a, b = np.asarray(call(_pykernels)), np.asarray(call(_ckernels))
        agree = bool(np.allclose(a, b, rtol=1e-10, atol=1e-12))
        tp = _time(lambda: call(_pykernels), args.repeat)
        tc = _time(lambda: call(_ckernels), args.repeat)
        rows.append((name, tp * 1e6, tc * 1e6, tp / tc, agree))
    print(f"{'kernel':28s} {'python us':>11s} {'cython us':>11s} {'speedup':>8s}  agree")
    for name, tp, tc, sp, agree in rows:
        print(f"{name:28s} {tp:11.1f} {tc:11.1f} {sp:8.1f}  {agree}")
    if args.out:
        from minimax_spp.reporting import write_csv

        cols = ("kernel", "python_us", "cython_us", "speedup", "agree")
        write_csv(args.out, cols, [dict(zip(cols, r)) for r in rows])
    return 0 if all(r[4] for r in rows) else 1


if __name__ == "__main__":
    sys.exit(main())
