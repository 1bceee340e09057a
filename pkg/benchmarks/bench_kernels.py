#!/usr/bin/env python3
"""Time the beam-trace and aim-solve kernels on the JIT path vs the
pure-Python fallback.

The fallback is selected by re-running this script in a subprocess with
PESTLASER_NO_NUMBA=1, so each process imports the kernels exactly once.

Usage: python benchmarks/bench_kernels.py [n_calls]
"""

import os
import subprocess
import sys
import time

import numpy as np


def bench(n_calls: int) -> dict:
    from pestlaser._kernels import USE_NUMBA, solve_kernel, trace_kernel, warmup
    from pestlaser.galvo import GalvoRig

    warmup()  # JIT cost paid here, not inside the timed loops
    geom = GalvoRig().geom
    rng = np.random.default_rng(0)
    angles = rng.uniform(-0.3, 0.3, (n_calls, 2))
    depths = rng.uniform(0.3, 3.0, n_calls)
    targets = rng.uniform(-0.25, 0.25, (n_calls, 2)) * depths[:, None]

    t0 = time.perf_counter()
    for th1, th2 in angles:
        trace_kernel(th1, th2, geom)
    t_trace = time.perf_counter() - t0

    t0 = time.perf_counter()
    for (tx, ty), tz in zip(targets, depths):
        solve_kernel(tx, ty, tz, geom, 0.0, 0.0)
    t_solve = time.perf_counter() - t0

    return {"jit": USE_NUMBA, "n": n_calls, "trace_s": t_trace,
            "solve_s": t_solve}


def main():
    n_calls = int(sys.argv[1]) if len(sys.argv) > 1 else 20000

    if os.environ.get("_BENCH_CHILD"):
        r = bench(n_calls)
        print(f"{r['jit']:d} {r['trace_s']:.6f} {r['solve_s']:.6f}")
        return

    rows = []
    for label, flag in (("numba", "0"), ("fallback", "1")):
        env = dict(os.environ, PESTLASER_NO_NUMBA=flag, _BENCH_CHILD="1")
        out = subprocess.run([sys.executable, __file__, str(n_calls)],
                             env=env, capture_output=True, text=True,
                             check=True).stdout.split()
        rows.append((label, bool(int(out[0])), float(out[1]), float(out[2])))

    print(f"{n_calls} calls per kernel")
    print(f"{'path':<10} {'jit':<5} {'trace':>12} {'solve':>12}")
    for label, jit, tr, so in rows:
        print(f"{label:<10} {str(jit):<5} {tr:>10.4f} s {so:>10.4f} s")
    if rows[0][1]:
        print(f"speedup: trace {rows[1][2] / rows[0][2]:.1f}x, "
              f"solve {rows[1][3] / rows[0][3]:.1f}x")
    else:
        print("numba unavailable; both runs used the fallback")


if __name__ == "__main__":
    main()
