"""Compare the numpy and compiled kernel backends.

Times each hot kernel on an ``N``-grid and one full ``solve_interval``,
reporting the best of several repeats per backend::

    python benchmarks/bench_kernels.py --N 16 --M 64
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from dnse import kernels
from dnse.spectral import TorusGrid, random_field
from dnse.stepper import Segment, StepScheme, propagators, solve_interval


def cases(N: int, M: int) -> dict[str, callable]:
    rng = np.random.default_rng(0)
    g = TorusGrid(N)
    kx, ky, kz = g.kvec
    w = rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)
    u = rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)
    a, b = propagators(g, 1.0, 0.1 / M, "etd1")
    out = np.empty(g.shape, dtype=complex)
    n = g.padded
    up = rng.standard_normal((3, n, n, n))
    grad = rng.standard_normal((3, 3, n, n, n))
    pout = np.empty((3, n, n, n))
    stack = rng.standard_normal((M + 1,) + g.shape) + 0j
    weight = g.sobolev_weight(1.0)
    psi = Segment(g, 0.1, np.stack([random_field(g, rng).coeffs for _ in range(M + 1)]))
    u0, f = random_field(g, rng), random_field(g, rng)
    scheme = StepScheme("etd1", M)
    return {
        "leray": lambda: kernels.active().leray(w, kx, ky, kz, g.inv_k2, g.mask, out),
        "affine_project": lambda: kernels.active().affine_project(u, w, a, b, kx, ky, kz, g.inv_k2, out),
        "advect": lambda: kernels.active().advect(up, grad, pout),
        "weighted_sq_norms": lambda: kernels.active().weighted_sq_norms(stack, weight),
        "solve_interval": lambda: solve_interval(psi, u0, f, 1.0, scheme),
    }


def best_time(fn, repeat: int) -> float:
    number = 1
    while timeit.timeit(fn, number=number) < 0.05 and number < 10_000:
        number *= 4
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--N", type=int, default=16)
    ap.add_argument("--M", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = kernels.available()
    prev = kernels.name()
    work = cases(args.N, args.M)
    print(f"N={args.N} M={args.M} backends={backends}")
    print(f"{'kernel':<20}" + "".join(f"{b:>14}" for b in backends) + (f"{'speedup':>10}" if len(backends) > 1 else ""))
    try:
        for name, fn in work.items():
            times = {}
            for b in backends:
                kernels.set_backend(b)
                times[b] = best_time(fn, args.repeat)
            row = f"{name:<20}" + "".join(f"{times[b] * 1e3:>11.3f} ms" for b in backends)
            if "compiled" in times:
                row += f"{times['python'] / times['compiled']:>9.2f}x"
            print(row)
    finally:
        kernels.set_backend(prev)


if __name__ == "__main__":
    main()
