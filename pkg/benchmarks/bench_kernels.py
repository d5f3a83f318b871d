"""Time the numba kernels against their pure-numpy/Python fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5]

A full experiment run is also timed in a subprocess per backend, selected
with BAYESFBLIN_NUMBA.
"""

import argparse
import os
import subprocess
import sys
import timeit
from pathlib import Path

import numpy as np

from bayesfblin import _accel, dynamics
from bayesfblin.dynamics import PendulumParams
from bayesfblin.kernels import KernelSpec, cross

ROOT = Path(__file__).resolve().parent.parent

RUN = """
import time
from bayesfblin import backend, harness
cfg = harness.ExperimentConfig.load("experiments/exp1.json")
harness.run(cfg)
t0 = time.perf_counter()
harness.run(cfg)
print(backend(), time.perf_counter() - t0)
"""


def best(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def bench_gram(repeat):
    rng = np.random.default_rng(0)
    spec = KernelSpec.rq([1.5, 6.0], 3.0, 2.0)
    print(f"{'gram n':>10} {'numba ms':>10} {'numpy ms':>10} {'speedup':>8}")
    for n in (10, 40, 160):
        X = rng.normal(size=(n, 2))
        cross(spec, X, X, use_numba=True)
        fast = best(lambda: cross(spec, X, X, use_numba=True), repeat, 50)
        slow = best(lambda: cross(spec, X, X, use_numba=False), repeat, 50)
        print(f"{n:>10} {fast * 1e3:>10.4f} {slow * 1e3:>10.4f} {slow / fast:>8.1f}")


def bench_integrator(repeat):
    p = PendulumParams(l=1, m=0.5, r=1)
    jit = dynamics._dopri_pendulum
    py = getattr(jit, "py_func", jit)
    args = (0.4, -1.0, 0.3, 0.01, p.g / p.l, p.r / p.inertia, 1 / p.inertia, 1e-8, 0.0, 0.0, 0.0,
            dynamics._A, dynamics._B5, dynamics._E, dynamics._C)
    jit(*args)
    fast = best(lambda: jit(*args), repeat, 200)
    slow = best(lambda: py(*args), repeat, 20)
    print(f"\nhold step (dt=0.01, tol=1e-8): numba {fast * 1e6:.1f} us, python {slow * 1e6:.1f} us, "
          f"speedup {slow / fast:.1f}x")


def bench_run():
    print("\nfull exp1 SP run (20 s simulated):")
    for flag in ("1", "0"):
        env = dict(os.environ, BAYESFBLIN_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", RUN], cwd=ROOT, env=env, capture_output=True,
                             text=True, check=True).stdout.split()
        print(f"  {out[0]:>6}: {float(out[1]):.3f} s")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _accel.USE_NUMBA:
        print("numba disabled in this process; kernel timings compare the fallback against itself")
    bench_gram(args.repeat)
    bench_integrator(args.repeat)
    bench_run()


if __name__ == "__main__":
    main()
