"""Benchmark the operator sweep: numba-compiled loops vs the numpy fallback.

Run:  python benchmarks/bench_sweep.py
The same comparison is selected at import time by NLHJ_DISABLE_NUMBA=1.
"""

import time

import numpy as np

from nlhj._accel import NUMBA_ENABLED
from nlhj.geometry import Domain, Grid
from nlhj.kernels import build_quadrature, fractional_laplacian_kernel
from nlhj.operators import (SweepPlan, _sweep_loops, _sweep_loops_py,
                            _sweep_numpy, dense_taps_1d)


def bench(h, alpha=0.5, r_max=8.0, repeats=20):
    dom = Domain((-1,), (1,))
    k = fractional_laplacian_kernel(alpha, 1)
    qt = build_quadrature(k, h, r_max)
    grid = Grid(dom, h, halo=int(np.floor(r_max / h + 1e-12)))
    plan = SweepPlan(grid, qt)
    rng = np.random.default_rng(0)
    E = rng.standard_normal(grid.size)
    core = grid.core_flat
    centers = E[core].copy()
    out = np.empty(len(core))
    taps, tc, diag = dense_taps_1d(qt, plan.nf_coeffs, plan.use_comp)
    zeros = np.zeros(1)
    off_dense = np.arange(-tc, tc + 1, dtype=np.int64)
    args = (E, centers, core, off_dense, taps, diag, plan.strides, zeros,
            False, zeros, qt.h, out)

    results = {}
    t0 = time.perf_counter()
    for _ in range(repeats):
        _sweep_numpy(*args, taps=taps, tap_center=tc, diag=diag)
    results["numpy"] = (time.perf_counter() - t0) / repeats
    ref = out.copy()

    if NUMBA_ENABLED:
        _sweep_loops(*args)  # compile
        t0 = time.perf_counter()
        for _ in range(repeats):
            _sweep_loops(*args)
        results["numba"] = (time.perf_counter() - t0) / repeats
        # paths reassociate the sum, so agreement is to rounding only
        scale = np.abs(ref).max() + 1.0
        assert np.allclose(out, ref, rtol=1e-8, atol=1e-8 * scale)
    else:
        t0 = time.perf_counter()
        _sweep_loops_py(*args)
        results["python_loops"] = time.perf_counter() - t0

    n_ops = len(core) * len(plan.off_flat)
    print(f"h = {h:.6g}: {len(core)} nodes x {len(plan.off_flat)} offsets "
          f"({n_ops / 1e6:.1f} M mul-adds per sweep)")
    for name, dt in results.items():
        print(f"  {name:>12}: {dt * 1e3:8.3f} ms/sweep "
              f"({n_ops / dt / 1e9:6.2f} Gop/s)")
    return results


if __name__ == "__main__":
    print(f"numba available and enabled: {NUMBA_ENABLED}")
    for h in (2.0 ** -7, 2.0 ** -8, 2.0 ** -9):
        bench(h)
