"""Compiled vs pure-Python propagation kernel.

Usage: python benchmarks/bench_kernels.py [--repeat 20]

Times one monodromy propagation (the inner loop of band scans, Floquet
samplers and Birman-Schwinger assembly) for a few operators and checks
that both backends agree.
"""
import argparse
import timeit

import numpy as np

from floquet_spec import kernels
from floquet_spec.operator_model import FourierCoefficient, hill_operator, normalize, free_operator

CASES = {
    "free n=2": normalize(free_operator(2, -1.0))[0],
    "hill n=2": normalize(hill_operator([FourierCoefficient(-1, 1.0), FourierCoefficient(1, 1.0)]))[0],
    "free n=4": normalize(free_operator(4, 1.0))[0],
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    fast = kernels.compiled_propagate_companion()
    slow = kernels.python_propagate_companion
    stops = np.linspace(0.0, 1.0, 65)[1:]
    lam = 2.0 + 1.0j
    print(f"{'case':<10} {'python ms':>10} {'cython ms':>10} {'speedup':>8} {'max diff':>10}")
    for name, spec in CASES.items():
        harm, coef = spec.coefficient_arrays()
        run = lambda f: f(harm, coef, lam, 0.0, stops, 1e-12)
        t_py = min(timeit.repeat(lambda: run(slow), number=1, repeat=args.repeat)) * 1e3
        if fast is None:
            print(f"{name:<10} {t_py:>10.3f} {'n/a':>10} {'n/a':>8} {'n/a':>10}")
            continue
        t_c = min(timeit.repeat(lambda: run(fast), number=1, repeat=args.repeat)) * 1e3
        diff = np.max(np.abs(run(fast)[0] - run(slow)[0]))
        print(f"{name:<10} {t_py:>10.3f} {t_c:>10.3f} {t_py / t_c:>8.1f} {diff:>10.2e}")


if __name__ == "__main__":
    main()
