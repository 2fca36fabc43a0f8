"""Time the compiled and numpy kernel backends.

    python3 bench/benchmark_kernels.py [--n-xi 400] [--repeat 200]

Reports the per-call cost of the field sweep and of a full right-hand side,
plus wall time for one preset run on each backend.
"""

import argparse
import time
import timeit

import numpy as np

from eitlab import scenarios
from eitlab.kernels import cell_weights, get_backend
from eitlab.mb_solver import SolverOptions, run


def _inputs(n, seed=0):
    rng = np.random.default_rng(seed)
    z = lambda: rng.normal(size=n) + 1j * rng.normal(size=n)  # noqa: E731
    d = 190.0
    decay, wa, wb = cell_weights(d, 1.0 / (n - 1))
    return (z(), z(), z(), 3.0 + 0.5j, 2.0 - 1.0j, 0.3 + 0.1j, 0.0j, d**0.5, 36.1, decay, wa, wb, True)


def bench_calls(n, repeat):
    args = _inputs(n)
    rows = []
    for name in ("python", "cython"):
        try:
            impl = get_backend(name)
        except ImportError:
            rows.append((name, None, None))
            continue
        t_sweep = min(timeit.repeat(lambda: impl.sweep_fields(*args), number=repeat, repeat=3)) / repeat
        rhs_args = args[:9] + (0.003, 1.5) + args[9:]
        t_rhs = min(timeit.repeat(lambda: impl.mb_rhs(*rhs_args), number=repeat, repeat=3)) / repeat
        rows.append((name, t_sweep, t_rhs))
    return rows


def bench_run(n_xi):
    sc = scenarios.build("forward_slow_light_storage", n_xi=n_xi)
    out = {}
    for name in ("python", "cython"):
        try:
            get_backend(name)
        except ImportError:
            continue
        t0 = time.perf_counter()
        run(sc.params, sc.schedule, sc.probe, sc.grid, SolverOptions(backend=name))
        out[name] = time.perf_counter() - t0
    return out, sc.grid.n_steps


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-xi", type=int, default=400)
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()

    print(f"kernel calls, n_xi = {args.n_xi}")
    print(f"{'backend':8s} {'sweep_fields (us)':>18s} {'mb_rhs (us)':>12s}")
    rows = bench_calls(args.n_xi, args.repeat)
    for name, ts, tr in rows:
        if ts is None:
            print(f"{name:8s} {'unavailable':>18s}")
        else:
            print(f"{name:8s} {ts * 1e6:18.1f} {tr * 1e6:12.1f}")
    times, steps = bench_run(args.n_xi)
    print(f"\nforward_slow_light_storage, {steps} steps")
    for name, t in times.items():
        print(f"{name:8s} {t:8.2f} s")
    if len(times) == 2:
        print(f"speedup  {times['python'] / times['cython']:8.2f}x")


if __name__ == "__main__":
    main()
