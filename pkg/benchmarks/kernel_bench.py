"""Benchmark of the hot stencil kernels: numba fast path vs numpy fallback.

Usage: python benchmarks/kernel_bench.py [--spacing 1/256] [--repeats 50]

Times the Laplacian apply, the residual evaluation, and a full Jacobian
matvec on a unit-square grid under both backends and verifies the results
agree bit for bit.
"""

import argparse
import time

import numpy as np

from mfelab import grid, kernels
from mfelab.core import Params, jacobian_apply, residual
from mfelab.grid import Field


def _time(fn, repeats):
    for _ in range(3):
        fn()  # warm-up (jit compilation on the numba path, caches)
    best = float("inf")
    for _ in range(5):
        t0 = time.perf_counter()
        for _ in range(max(1, repeats // 5)):
            fn()
        best = min(best, (time.perf_counter() - t0) / max(1, repeats // 5))
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--spacing", type=str, default="1/256")
    ap.add_argument("--repeats", type=int, default=50)
    args = ap.parse_args()
    num, _, den = args.spacing.partition("/")
    h = float(num) / float(den or "1")

    dom = grid.build_rectangle(1.0, 1.0, h)
    rng = np.random.default_rng(0)
    u = Field(dom, rng.standard_normal(dom.n))
    v = Field(dom, rng.standard_normal(dom.n))
    p = Params(lam=10.0, sigma=0.5, gamma=-0.4)

    cases = {
        "laplacian_apply": lambda: dom.apply_neg_laplacian(u.values),
        "residual": lambda: residual(u, p).values,
        "jacobian_matvec": lambda: jacobian_apply(u, p, v).values,
    }

    print(f"grid: unit square, spacing {args.spacing}, n = {dom.n}")
    print(f"backends: {kernels.available_backends()}")
    results = {}
    for backend in kernels.available_backends():
        kernels.set_backend(backend)
        for name, fn in cases.items():
            results[(backend, name)] = (_time(fn, args.repeats), fn())

    width = max(len(n) for n in cases)
    print(f"\n{'kernel':<{width}}  {'numpy':>12}  {'numba':>12}  {'speedup':>8}")
    for name in cases:
        t_np = results[("numpy", name)][0]
        line = f"{name:<{width}}  {t_np * 1e3:>10.3f}ms"
        if ("numba", name) in results:
            t_nb = results[("numba", name)][0]
            same = np.array_equal(results[("numpy", name)][1],
                                  results[("numba", name)][1])
            line += f"  {t_nb * 1e3:>10.3f}ms  {t_np / t_nb:>7.2f}x"
            line += "" if same else "  [MISMATCH]"
        else:
            line += f"  {'-':>12}  {'-':>8}"
        print(line)


if __name__ == "__main__":
    main()
