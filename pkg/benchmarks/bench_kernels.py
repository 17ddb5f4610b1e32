"""Compare the compiled and the numpy kernels on the sizes the samplers actually use.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints the best-of-``repeat`` wall time for each backend and the speedup.
"""
import argparse
import timeit

import numpy as np

from rdmc import _kernels_py

try:
    from rdmc import _kernels as compiled
except ImportError:
    compiled = None


def cases():
    rng = np.random.default_rng(0)
    two = (np.array([[0.0, 0.0], [8.0, 0.0]]), np.log([0.5, 0.5]))
    angles = 2 * np.pi * np.arange(6) / 6
    six = (np.column_stack([4 * np.cos(angles), 4 * np.sin(angles)]), np.full(6, -np.log(6)))
    inner = rng.standard_normal((10_000, 2)) * 3  # 1000 particles x 10 inner samples
    yield "gmm_energy_grad 2 modes, 10k pts", "gmm_energy_grad", (inner, *two)
    yield "gmm_energy_grad 6 modes, 10k pts", "gmm_energy_grad", (inner, *six)
    yield "gmm_energy 6 modes, 100k pts", "gmm_energy", (rng.standard_normal((100_000, 2)), *six)
    X, Y = rng.standard_normal((1000, 2)), rng.standard_normal((10_000, 2))
    yield "rbf_kernel_sum 1k x 10k", "rbf_kernel_sum", (X, Y, 0.1)
    yield "rbf_kernel_sum 1k x 1k", "rbf_kernel_sum", (X, X, 0.1)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if compiled is None:
        print("compiled extension not built; run `pip install --no-build-isolation -e .` first")
    print(f"{'case':36s} {'numpy ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for label, name, call_args in cases():
        py = min(timeit.repeat(lambda: getattr(_kernels_py, name)(*call_args), number=1,
                               repeat=args.repeat)) * 1e3
        if compiled is None:
            print(f"{label:36s} {py:10.2f} {'-':>10s} {'-':>8s}")
            continue
        cy = min(timeit.repeat(lambda: getattr(compiled, name)(*call_args), number=1,
                               repeat=args.repeat)) * 1e3
        print(f"{label:36s} {py:10.2f} {cy:10.2f} {py / cy:7.1f}x")


if __name__ == "__main__":
    main()
