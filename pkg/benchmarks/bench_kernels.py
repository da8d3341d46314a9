"""Benchmark: compiled kernels vs the pure-Python reference.

Times the two hot loops on representative workloads:
  * the scalar MP fixed point over a 2000-atom measure across a z-grid,
  * the layer-wise population recursion across a density grid.

Run:  python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from deeprf._kernels import _ref

try:
    from deeprf._kernels import _speed
except ImportError:
    _speed = None


def time_fn(fn, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_mp(mod):
    rng = np.random.default_rng(0)
    x = rng.uniform(0.05, 3.0, 2000)
    w = np.full(2000, 1 / 2000)
    zs = [complex(l, 1e-6) for l in np.linspace(0.05, 5.0, 60)]

    def work():
        m = -1.0 / zs[0]
        for z in zs:
            m, _, _ = mod.mp_fixed_point(x, w, 1.5, z, m, 0.5, 1e-12, 10_000)

    return time_fn(work)


def bench_chain(mod):
    rho = np.array([1 / 1.2, 1.2 / 0.6])
    a = np.array([0.55, 0.48])
    b = np.array([0.2, 0.35])
    x = np.array([1.0])
    w = np.array([1.0])
    grid = np.linspace(0.05, 5.0, 150)

    def work():
        m = np.full(3, -1.0 / complex(grid[0], 1e-6), dtype=complex)
        for lam in grid:
            m, _, _ = mod.pop_chain_solve(complex(lam, 1e-6), rho, a, b, x, w, m,
                                          0.5, 1e-10, 10_000)

    return time_fn(work)


def main():
    rows = [("mp_fixed_point (2000 atoms, 60 z)", bench_mp),
            ("pop_chain_solve (150-point grid)", bench_chain)]
    print(f"{'kernel':<40}{'python':>12}{'compiled':>12}{'speedup':>10}")
    for name, bench in rows:
        t_py = bench(_ref)
        if _speed is None:
            print(f"{name:<40}{t_py:>11.3f}s{'n/a':>12}{'n/a':>10}")
        else:
            t_c = bench(_speed)
            print(f"{name:<40}{t_py:>11.3f}s{t_c:>11.3f}s{t_py / t_c:>9.1f}x")


if __name__ == "__main__":
    main()
