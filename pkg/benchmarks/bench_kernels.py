"""Time the semi-Lagrangian sweep with the numba kernel and the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeats 5] [--sizes 2001 40401]

Sizes are node counts; perfect squares run on a 2D torus, others on a 1D box.
Each row also reports the largest disagreement between the two backends.
"""
import argparse
import time

import numpy as np

from hjvisc import _kernels
from hjvisc.grid import build_grid
from hjvisc.hamiltonian import quadratic
from hjvisc.value import stationary_operator, uniform_velocities


def problem(n_nodes: int):
    side = int(round(np.sqrt(n_nodes)))
    if side * side == n_nodes and n_nodes > 100:
        grid = build_grid({"kind": "torus", "lower": [0, 0], "upper": [1, 1],
                           "nodes": [side, side]})
        V = uniform_velocities(2, 2.0, 9)
    else:
        grid = build_grid({"kind": "box", "lower": [-2], "upper": [2], "nodes": [n_nodes]})
        V = uniform_velocities(1, 4.0, 81)
    H = quadratic(grid.dim)
    h = lambda x: np.sin(2 * np.pi * x[..., 0])
    op = stationary_operator(H, grid, 0.2, h, float(grid.spacing.min()), V)
    return grid, op


def best_of(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--sizes", type=int, nargs="+", default=[2001, 20001, 40401])
    args = parser.parse_args()

    print(f"numba available: {_kernels.NUMBA_AVAILABLE}")
    header = f"{'nodes':>8} {'dim':>4} {'|V|':>5} {'numpy [ms]':>11} {'numba [ms]':>11} " \
             f"{'speedup':>8} {'max diff':>10}"
    print(header)
    print("-" * len(header))
    for n in args.sizes:
        grid, op = problem(n)
        values = np.random.default_rng(0).normal(size=grid.size)
        common = (values, grid.points, op.displacements, grid.lower, grid.spacing,
                  np.asarray(grid.shape), grid.periodic, op.reward, op.beta)
        ref, _ = _kernels.sweep_numpy(*common)
        t_np = best_of(lambda: _kernels.sweep_numpy(*common), args.repeats)
        if _kernels.NUMBA_AVAILABLE:
            _kernels.sweep_numba(*common)  # compile outside the timed region
            out, _ = _kernels.sweep_numba(*common)
            t_nb = best_of(lambda: _kernels.sweep_numba(*common), args.repeats)
            diff = float(np.max(np.abs(out - ref)))
            print(f"{grid.size:>8} {grid.dim:>4} {len(op.displacements):>5} {1e3 * t_np:>11.2f} "
                  f"{1e3 * t_nb:>11.2f} {t_np / t_nb:>8.1f} {diff:>10.1e}")
        else:
            print(f"{grid.size:>8} {grid.dim:>4} {len(op.displacements):>5} {1e3 * t_np:>11.2f} "
                  f"{'-':>11} {'-':>8} {'-':>10}")


if __name__ == "__main__":
    main()
