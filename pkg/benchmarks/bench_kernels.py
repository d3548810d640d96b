#!/usr/bin/env python3
"""Benchmark the numba kernel path against the pure-numpy fallback.

Times one structured channel application across frame sizes, then a full
stochastic trajectory, and reports the agreement between the two backends.

    python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from qrf_sim import kernels
from qrf_sim.channels import average_channel
from qrf_sim.spin import build_spin_operators, coherent_state
from qrf_sim.trajectory import run_stochastic


def time_call(fn, repeats):
    fn()  # warm-up (and jit compile on the numba path)
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def bench_single_step(repeats):
    print(f"{'l':>5} {'d':>5} {'numpy':>12} {'numba':>12} {'speedup':>8} {'max |diff|':>12}")
    for l in (8, 16, 32, 64, 128):
        ops = build_spin_operators(l)
        rho = coherent_state(l, np.pi / 2)
        times = {}
        outs = {}
        for name in ("numpy", "numba"):
            kernels.set_backend(name)
            times[name] = time_call(lambda: average_channel(rho, 1.0, ops), repeats)
            outs[name] = average_channel(rho, 1.0, ops)
        diff = np.abs(outs["numpy"] - outs["numba"]).max()
        print(f"{l:>5} {ops.d:>5} {times['numpy']*1e6:>10.1f}us {times['numba']*1e6:>10.1f}us "
              f"{times['numpy']/times['numba']:>7.2f}x {diff:>12.2e}")


def bench_trajectory(repeats):
    l, steps = 16, 200
    ops = build_spin_operators(l)
    rho = coherent_state(l, np.pi / 2)
    print(f"\nstochastic trajectory, l={l}, {steps} measurements:")
    for name in ("numpy", "numba"):
        kernels.set_backend(name)
        dt = time_call(lambda: run_stochastic(rho, steps, 1.0, None, 7, ops),
                       max(1, repeats // 4))
        print(f"  {name:>6}: {dt*1e3:8.1f} ms/trajectory")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=50)
    args = parser.parse_args()
    if not kernels.HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")
    try:
        bench_single_step(args.repeats)
        bench_trajectory(args.repeats)
    finally:
        kernels.set_backend(None)


if __name__ == "__main__":
    main()
