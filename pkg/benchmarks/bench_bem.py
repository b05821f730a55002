"""Time the BEM panel-pair assembly through the numba kernels and the numpy fallback.

    python benchmarks/bench_bem.py --level 1 --p 1 --repeat 3

Both paths assemble the same broken-Lagrange V, K, W matrices; the script
reports wall times (numba timed after a warm-up call that triggers
compilation) and the largest entrywise difference between the two results.
"""

import argparse
import math
import time

import numpy as np

from mortar_dgbem.bem import BemQuadrature, assemble_lagrange
from mortar_dgbem.mesh import build_cube_mesh, extract_surface


def timed(fn, repeat):
    best = math.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--level", type=int, default=1)
    ap.add_argument("--p", type=int, default=1)
    ap.add_argument("--k-multiple", type=float, default=1.0)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--skip-numpy", action="store_true", help="numpy path is slow above level 1")
    args = ap.parse_args(argv)

    surface = extract_surface(build_cube_mesh(1.0, args.level))
    k = args.k_multiple * math.sqrt(3) * math.pi
    quad = BemQuadrature()
    run = lambda backend: assemble_lagrange(surface, args.p, k, quad, backend)  # noqa: E731

    t0 = time.perf_counter()
    run("numba")
    compile_time = time.perf_counter() - t0
    t_numba, ref = timed(lambda: run("numba"), args.repeat)
    print(f"triangles={surface.n_triangles} p={args.p} k={k:.4f}")
    print(f"numba  first call (incl. compile) {compile_time:8.3f} s")
    print(f"numba  best of {args.repeat}             {t_numba:8.3f} s")
    if args.skip_numpy:
        return
    t_numpy, other = timed(lambda: run("numpy"), 1)
    diff = max(np.abs(a - b).max() / np.abs(a).max() for a, b in zip(ref, other))
    print(f"numpy  single call               {t_numpy:8.3f} s")
    print(f"speed-up {t_numpy / t_numba:6.1f}x   max relative difference {diff:.2e}")


if __name__ == "__main__":
    main()
