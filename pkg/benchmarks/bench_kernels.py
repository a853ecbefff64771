"""Compare the compiled marching kernels against the numpy reference.

Runs the two hot loops (closed-loop feedback march and upwind oracle
march) on workloads sized like the large test runs and reports the best
wall time per backend plus the speedup.  The field outputs of the two
backends are checked to agree exactly before timings are reported.

Usage:
    python3 benchmarks/bench_kernels.py [--nodes N] [--steps K] [--repeat R]
"""

import argparse
import time

import numpy as np

from transportchain.kernels import _reference

try:
    from transportchain.kernels import _speedups
except ImportError:  # pragma: no cover - extension not built
    _speedups = None


def closed_loop_workload(rng, n, steps):
    x0 = rng.normal(size=n + 1)
    first_nodes = np.linspace(n // 10, n, 9, endpoint=False).astype(np.int64)
    scale = rng.uniform(0.0, 1.0, size=steps)
    left_values = rng.normal(size=steps)
    weights = np.full(n + 1, 1.0 / n)
    weights[0] = weights[-1] = 0.5 / n
    snap_steps = np.array([0, steps], dtype=np.int64)
    return x0, first_nodes, scale, left_values, weights, snap_steps


def upwind_workload(rng, n, steps):
    x0 = rng.normal(size=n + 1)
    first_nodes = np.linspace(n // 10, n, 9, endpoint=False).astype(np.int64)
    ghost_add = rng.normal(size=(steps, first_nodes.size))
    left_values = rng.normal(size=steps)
    weights = np.full(n + 1, 1.0 / n)
    weights[0] = weights[-1] = 0.5 / n
    snap_steps = np.array([0, steps], dtype=np.int64)
    return x0, first_nodes, 1.0, ghost_add, left_values, weights, snap_steps


def best_time(fn, args, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, result


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--nodes", type=int, default=10_000,
                        help="number of grid intervals (default 10000)")
    parser.add_argument("--steps", type=int, default=2_400,
                        help="number of time steps (default 2400)")
    parser.add_argument("--repeat", type=int, default=3,
                        help="timing repetitions, best is kept (default 3)")
    opts = parser.parse_args(argv)

    if _speedups is None:
        print("compiled extension not available; nothing to compare "
              "(build it with: pip install -e . --no-build-isolation)")
        return 1

    rng = np.random.default_rng(0)
    workloads = [
        ("closed_loop_march", "closed_loop_march",
         closed_loop_workload(rng, opts.nodes, opts.steps)),
        ("upwind_march", "upwind_march",
         upwind_workload(rng, opts.nodes, opts.steps)),
    ]
    print(f"nodes = {opts.nodes}, steps = {opts.steps}, "
          f"repeat = {opts.repeat}\n")
    print(f"{'kernel':<20}{'numpy':>12}{'cython':>12}{'speedup':>10}")
    for label, name, args in workloads:
        t_ref, out_ref = best_time(getattr(_reference, name), args,
                                   opts.repeat)
        t_fast, out_fast = best_time(getattr(_speedups, name), args,
                                     opts.repeat)
        for a, b in zip(out_ref, out_fast):
            if not np.allclose(a, b, rtol=1e-12, atol=0.0):
                raise AssertionError(f"{label}: backends disagree")
        print(f"{label:<20}{t_ref * 1e3:>10.1f}ms{t_fast * 1e3:>10.1f}ms"
              f"{t_ref / t_fast:>9.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
