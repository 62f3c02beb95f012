"""Benchmark the compiled SMO kernel against the pure-numpy fallback.

Usage: python benchmarks/bench_smo.py [--sizes 200,400,800] [--repeats 3]

Both solvers run the identical algorithm on the same kernel matrices; the
script reports wall time, speedup, and verifies that the results are
bit-identical.
"""

import argparse
import time

import numpy as np

from singlem import svm
from singlem._smo_py import smo_loop as pure_loop


def blobs(n, dim, seed):
    rng = np.random.default_rng(seed)
    half = n // 2
    x = np.concatenate([
        rng.normal(size=(half, dim)) + 1.2,
        rng.normal(size=(n - half, dim)) - 1.2,
    ])
    y = np.concatenate([np.ones(half), -np.ones(n - half)])
    return x, np.ascontiguousarray(y)


def time_solver(solver, K, y, repeats):
    best = np.inf
    result = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = solver(K, y, 1.0, 1e-3, 10_000_000)
        best = min(best, time.perf_counter() - t0)
    return best, result


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--sizes", default="200,400,800")
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    try:
        from singlem._smo import smo_loop as compiled_loop
    except ImportError:
        compiled_loop = None

    print(f"compiled extension available: {compiled_loop is not None}")
    print(f"solver selected by singlem.svm: "
          f"{'compiled' if svm.HAVE_COMPILED_SMO else 'pure numpy'}")
    print()
    header = f"{'n':>6} {'iters':>8} {'pure [ms]':>12} {'compiled [ms]':>14} {'speedup':>9}"
    print(header)
    print("-" * len(header))

    for n in sizes:
        x, y = blobs(n, 32, seed=n)
        K = np.ascontiguousarray(svm.kernel_matrix(x, x, "rbf_svm", 0.05))
        t_pure, res_pure = time_solver(pure_loop, K, y, args.repeats)
        if compiled_loop is None:
            print(f"{n:>6} {res_pure[2]:>8} {t_pure * 1e3:>12.2f} "
                  f"{'-':>14} {'-':>9}")
            continue
        t_comp, res_comp = time_solver(compiled_loop, K, y, args.repeats)
        identical = (np.asarray(res_comp[0]).tobytes() == res_pure[0].tobytes()
                     and res_comp[2] == res_pure[2])
        print(f"{n:>6} {res_pure[2]:>8} {t_pure * 1e3:>12.2f} "
              f"{t_comp * 1e3:>14.2f} {t_pure / t_comp:>8.1f}x"
              f"{'' if identical else '  RESULTS DIFFER!'}")


if __name__ == "__main__":
    main()
