"""Compare the compiled kernels with the numpy fallback.

Usage: ``python3 benchmarks/bench_kernels.py [--n 200000] [--repeat 5]``

Each kernel runs on identical inputs in both backends; the script checks
that the outputs agree and prints best-of-``repeat`` timings as CSV.
"""

import argparse
import sys
import timeit

import numpy as np

from scfred import _pykernels

try:
    from scfred import _ckernels
except ImportError:
    _ckernels = None


def cases(n, rng):
    s = np.linspace(-2.0, 2.0, n)
    beta = _pykernels.cutoff(s)[0]
    h = rng.normal(size=(n, 2))
    k = rng.normal(size=(n, 2))
    g, a = _pykernels.glue_pointwise(beta, h, k)
    m = int(np.sqrt(n / 4))
    M = rng.integers(0, 2, size=(m, m), dtype=np.uint8)
    return {
        "cutoff": (s,),
        "glue_pointwise": (beta, h, k),
        "unglue_pointwise": (beta, g, a),
        "gf2_row_reduce": (M,),
    }


def _same(x, y):
    if isinstance(x, tuple):
        return all(_same(a, b) for a, b in zip(x, y))
    if isinstance(x, list):
        return list(x) == list(y)
    return np.allclose(np.asarray(x, dtype=float), np.asarray(y, dtype=float), rtol=0, atol=1e-13)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=200_000)
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    if _ckernels is None:
        print("compiled kernels not built; run `pip install -e . --no-build-isolation`", file=sys.stderr)
        return 1
    rng = np.random.default_rng(0)
    print("kernel,python_s,cython_s,speedup,agree")
    for name, inputs in cases(args.n, rng).items():
        py, cy = getattr(_pykernels, name), getattr(_ckernels, name)
        agree = _same(py(*[x.copy() for x in inputs]), cy(*[x.copy() for x in inputs]))
        t_py = min(timeit.repeat(lambda: py(*inputs), number=1, repeat=args.repeat))
        t_cy = min(timeit.repeat(lambda: cy(*inputs), number=1, repeat=args.repeat))
        print(f"{name},{t_py:.6f},{t_cy:.6f},{t_py / t_cy:.2f},{agree}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
