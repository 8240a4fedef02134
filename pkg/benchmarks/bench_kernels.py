"""Benchmark the compiled kernel core against the pure-python fallback.

Run:  python benchmarks/bench_kernels.py [--sizes 32,64,128,256]

Both backends implement identical algorithms (same pivot rules, same
arithmetic order), so outputs are checked for exact equality while
timing.
"""

import argparse
import time

import numpy as np

from otflow._kernels import _fallback
from otflow.mmspace import gen_circle_grid
from otflow.rng import SplitMix64

try:
    from otflow._kernels import _core
except ImportError:
    _core = None


def _random_transport(rng, n):
    pa = np.array([[rng.uniform(), rng.uniform()] for _ in range(n)])
    pb = np.array([[rng.uniform(), rng.uniform()] for _ in range(n)])
    cost = ((pa[:, None, :] - pb[None, :, :]) ** 2).sum(-1)
    a = np.array([rng.uniform() + 0.05 for _ in range(n)])
    a /= a.sum()
    b = np.array([rng.uniform() + 0.05 for _ in range(n)])
    b *= a.sum() / b.sum()
    return cost, a, b


def _time(fn, *args, repeat=3):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--sizes", default="32,64,128,256")
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    if _core is None:
        print("compiled core not built; showing fallback timings only")
    rng = SplitMix64(2024)
    header = f"{'kernel':<18}{'n':>6}{'python':>12}{'compiled':>12}{'speedup':>10}  equal"
    print(header)
    print("-" * len(header))

    for n in sizes:
        cost, a, b = _random_transport(rng, n)
        t_py, out_py = _time(_fallback.transport_simplex, cost, a, b)
        if _core is not None:
            t_cy, out_cy = _time(_core.transport_simplex, cost, a, b)
            eq = all(np.array_equal(x, y) for x, y in zip(out_py[:3], out_cy[:3]))
            print(f"{'transport_simplex':<18}{n:>6}{t_py*1e3:>10.1f}ms{t_cy*1e3:>10.1f}ms"
                  f"{t_py/t_cy:>9.1f}x  {eq}")
        else:
            print(f"{'transport_simplex':<18}{n:>6}{t_py*1e3:>10.1f}ms{'-':>12}{'-':>10}")

        space = gen_circle_grid(n)
        f = np.sin(2 * np.pi * np.arange(n) / n)
        t_py, out_py = _time(_fallback.hopf_lax_eval, space.dist, space.dist_sq, f, 0.1)
        if _core is not None:
            t_cy, out_cy = _time(_core.hopf_lax_eval, space.dist, space.dist_sq, f, 0.1)
            eq = all(np.array_equal(x, y) for x, y in zip(out_py, out_cy))
            print(f"{'hopf_lax_eval':<18}{n:>6}{t_py*1e3:>10.2f}ms{t_cy*1e3:>10.2f}ms"
                  f"{t_py/t_cy:>9.1f}x  {eq}")

        t_py, out_py = _time(_fallback.slope_max_quotient, space.dist, f, 1.0 / n, 0)
        if _core is not None:
            t_cy, out_cy = _time(_core.slope_max_quotient, space.dist, f, 1.0 / n, 0)
            eq = np.array_equal(out_py, out_cy)
            print(f"{'slope_quotient':<18}{n:>6}{t_py*1e3:>10.2f}ms{t_cy*1e3:>10.2f}ms"
                  f"{t_py/t_cy:>9.1f}x  {eq}")


if __name__ == "__main__":
    main()
