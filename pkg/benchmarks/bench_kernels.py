"""Compare the compiled and numpy backends of the exponential scan.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5]

Times the raw recurrence at a few sizes, then one full Picard solve in a
subprocess per backend (the backend is fixed at import time).
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from levyaa import _scan_py, kernels

SIZES = [(1_000, 64), (10_000, 128), (100_000, 64)]

SOLVE = """
import math, time
from levyaa import kernels
from levyaa.scenario import builtin_scenario
from levyaa.solver import GridSpec, ensemble_noise, picard_solve
scn = builtin_scenario(delta=0.7, phase=math.pi / 2)
g = GridSpec(0.0, 10.0, 0.01, 3.0)
noise = ensemble_noise(scn, g, 0, 0)
picard_solve(scn, g, noise)
best = min(
    (lambda t0: (picard_solve(scn, g, noise), time.perf_counter() - t0)[1])(time.perf_counter())
    for _ in range({repeat})
)
print(kernels.BACKEND, best)
"""


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def solve_time(pure: bool, repeat: int):
    env = dict(os.environ)
    env.pop("LEVYAA_PURE_PYTHON", None)
    if pure:
        env["LEVYAA_PURE_PYTHON"] = "1"
    out = subprocess.run([sys.executable, "-c", SOLVE.format(repeat=repeat)], env=env,
                         capture_output=True, text=True, check=True)
    backend, seconds = out.stdout.split()
    return backend, float(seconds)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not kernels.compiled_available():
        print("compiled extension not built; only the numpy backend is available")
        return
    from levyaa import _scan

    rng = np.random.default_rng(0)
    print(f"{'steps x modes':>16} {'cython [ms]':>12} {'numpy [ms]':>12} {'speedup':>8}")
    for n, m in SIZES:
        f = rng.normal(size=(n, m))
        d = rng.uniform(0.5, 1.0, size=m)
        x0 = np.zeros(m)
        assert np.array_equal(_scan.exp_scan(d, f, x0), _scan_py.exp_scan(d, f, x0))
        tc = best_of(lambda: _scan.exp_scan(d, f, x0), args.repeat)
        tp = best_of(lambda: _scan_py.exp_scan(d, f, x0), args.repeat)
        print(f"{f'{n} x {m}':>16} {1e3 * tc:12.2f} {1e3 * tp:12.2f} {tp / tc:8.1f}")

    print("\nfull Picard solve, window [0, 10], dt 0.01, 64 modes")
    results = dict(solve_time(p, args.repeat) for p in (False, True))
    for name, t in results.items():
        print(f"{name:>8}: {1e3 * t:8.1f} ms")
    print(f" speedup: {results['python'] / results['cython']:.1f}x")


if __name__ == "__main__":
    main()
