"""Compare the compiled and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--size 256] [--phases 4] [--repeat 5]

Times each per-pixel kernel on its own, then one full u-step (ADMM
sweeps) with every kernel swapped to the chosen backend. Prints the best
of ``--repeat`` runs in milliseconds and the speedup of the compiled code.
"""
import argparse
import time
from contextlib import contextmanager

import numpy as np

from segres import kernels
from segres.core import Codebook, ImageField, Membership, ModelParams, ObservationMask
from segres.segment import build_unary, update_u


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return 1e3 * min(times)


@contextmanager
def using(module):
    saved = kernels.project_simplex, kernels.shrink, kernels.unary
    kernels.project_simplex, kernels.shrink, kernels.unary = module.project_simplex, module.shrink, module.unary
    try:
        yield
    finally:
        kernels.project_simplex, kernels.shrink, kernels.unary = saved


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=256)
    ap.add_argument("--phases", type=int, default=4)
    ap.add_argument("--channels", type=int, default=3)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--sweeps", type=int, default=50, help="ADMM sweeps in the u-step benchmark")
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    k, n, hw = args.phases, args.channels, args.size * args.size
    y = rng.normal(size=(k, hw))
    zx, zy = rng.normal(size=(2, k, args.size, args.size))
    g = rng.uniform(size=(n, hw))
    c = rng.uniform(size=(k, n))
    w = (rng.uniform(size=hw) > 0.3).astype(float)

    img = ImageField(g.reshape(n, args.size, args.size))
    s = build_unary(img, Codebook(c), ObservationMask(w.reshape(args.size, args.size)))
    u0 = Membership.uniform(k, (args.size, args.size))
    # inner_tol 0 so every backend runs the same number of sweeps
    params = ModelParams(mu=1.0, lam=5.0, phases=k, inner_tol=0.0, max_inner=args.sweeps)

    backends = kernels.backends()
    cases = {
        "project_simplex": lambda m: m.project_simplex(y),
        "shrink": lambda m: m.shrink(zx, zy, 0.25),
        "unary": lambda m: m.unary(g, c, w),
    }
    print(f"{args.size}x{args.size}, K={k}, N={n}, best of {args.repeat} (ms)")
    print(f"{'kernel':18s}" + "".join(f"{b:>10s}" for b in backends) + f"{'speedup':>10s}")
    for name, fn in cases.items():
        t = {b: best_of(lambda: fn(m), args.repeat) for b, m in backends.items()}
        print(f"{name:18s}" + "".join(f"{t[b]:10.2f}" for b in backends) + _speedup(t))

    t = {}
    for b, m in backends.items():
        with using(m):
            t[b] = best_of(lambda: update_u(s, u0, params), args.repeat)
    label = f"update_u x{args.sweeps}"
    print(f"{label:18s}" + "".join(f"{t[b]:10.2f}" for b in backends) + _speedup(t))


def _speedup(t):
    if "cython" not in t:
        return f"{'n/a':>10s}"
    return f"{t['python'] / t['cython']:9.1f}x"


if __name__ == "__main__":
    main()
