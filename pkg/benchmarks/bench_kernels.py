"""Time the compiled stencil kernel against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import timeit

import numpy as np

from kvnmd import kernels
from kvnmd.findiff import fd_coefficients

SHAPES = [(64, 64), (256, 256), (16, 16, 16, 16), (32, 32, 32, 32)]


def bench(shape, axis, d, backend, repeats):
    rng = np.random.default_rng(0)
    psi = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    vel = rng.normal(size=shape)
    out = np.zeros(shape, dtype=np.complex128)
    offsets, weights = fd_coefficients(d).nonzero()
    fn = lambda: kernels.stencil_diag_apply(psi, axis, offsets, weights, vel, out, -1j, backend)
    fn()
    return min(timeit.repeat(fn, number=1, repeat=repeats))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    have_cython = kernels.BACKEND == "cython"
    print(f"default backend: {kernels.BACKEND}")
    print(f"{'shape':>18} {'axis':>4} {'d':>2} {'numpy ms':>10} {'cython ms':>10} {'speedup':>8}")
    for shape in SHAPES:
        for axis in (0, len(shape) - 1):
            for d in (1, 3):
                t_np = bench(shape, axis, d, "numpy", args.repeats)
                t_cy = bench(shape, axis, d, "cython", args.repeats) if have_cython else float("nan")
                print(f"{str(shape):>18} {axis:>4} {d:>2} {1e3 * t_np:>10.3f} {1e3 * t_cy:>10.3f} "
                      f"{t_np / t_cy:>8.2f}")


if __name__ == "__main__":
    main()
