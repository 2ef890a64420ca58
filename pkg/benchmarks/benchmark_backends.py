#!/usr/bin/env python3
"""Timing comparison of the compiled and pure-numpy collision kernels.

Runs the gain/loss evaluation on a range of velocity grid sizes with both
backends, checks they agree, and prints a table of per-call times and the
speedup. Usage:

    python benchmarks/benchmark_backends.py [--sizes 8,12,16] [--repeats 3]
"""

import argparse
import sys
import time

import numpy as np

from bnsolve import _collision_py
from bnsolve.collision import saturated_fields
from bnsolve.grids import build_sphere_quadrature

try:
    from bnsolve import _collision_cy
except ImportError:
    _collision_cy = None


def time_call(fn, args, repeats):
    best = float("inf")
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="8,12,16",
                    help="comma-separated velocity grid sizes")
    ap.add_argument("--repeats", type=int, default=3,
                    help="repeats per measurement (best time is kept)")
    ap.add_argument("--alpha", type=float, default=0.5)
    ap.add_argument("--quad-order", type=int, default=2)
    args = ap.parse_args(argv)

    if _collision_cy is None:
        print("compiled extension not available; timing the numpy path only")

    quad = build_sphere_quadrature(args.quad_order)
    chi = 1.0 / args.alpha ** 2 if args.alpha > 0 else np.inf
    rng = np.random.default_rng(0)

    print(f"alpha = {args.alpha}, quadrature nodes = {len(quad.weights)}, "
          f"repeats = {args.repeats}")
    header = f"{'n_v':>5} {'numpy [s]':>12} {'cython [s]':>12} {'speedup':>9}"
    print(header)
    print("-" * len(header))

    for n in (int(s) for s in args.sizes.split(",")):
        f = rng.random((n, n, n)) * 1.5
        g, h = saturated_fields(f, args.alpha)
        call_args = (g, h, 2.0, chi, 1.0, 0.1, quad.nodes, quad.weights)
        t_py, (gain_p, nu_p) = time_call(_collision_py.gain_loss, call_args,
                                         args.repeats)
        if _collision_cy is None:
            print(f"{n:>5} {t_py:>12.4f} {'-':>12} {'-':>9}")
            continue
        t_cy, (gain_c, nu_c) = time_call(_collision_cy.gain_loss, call_args,
                                         args.repeats)
        scale = max(gain_p.max(), nu_p.max(), 1.0)
        err = max(np.max(np.abs(gain_c - gain_p)),
                  np.max(np.abs(nu_c - nu_p))) / scale
        if err > 1e-12:
            print(f"backend disagreement {err:.3e} at n_v = {n}",
                  file=sys.stderr)
            return 1
        print(f"{n:>5} {t_py:>12.4f} {t_cy:>12.4f} {t_py / t_cy:>8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
