"""Benchmark the jitted kernels against the pure-numpy fallback.

The dispatch flag is read once at import, so the two paths are timed in
child processes: one with CASCADEFIT_NO_NUMBA=1, one without.  Each child
adaptively picks a repetition count per workload (targeting ~1 s of wall
time), reports best-of-3 per-call timings as JSON, and the parent prints
the comparison table.

Run from the repository root:

    python3 benchmarks/bench_kernels.py
"""

import argparse
import json
import os
import subprocess
import sys
import time

TARGET_SECONDS = 1.0


def _workloads():
    from datetime import datetime, timezone

    import numpy as np

    from cascadefit import (
        CdSeizParams,
        FitConfig,
        ModelKind,
        SeizParams,
        TimeGrid,
        integrate,
        objective,
    )
    from cascadefit.cascade import ActivitySeries
    from cascadefit.integrator import infected_series

    grid = TimeGrid(n_obs=49, substeps=10)
    seiz = SeizParams(1.2, 0.5, 0.4, 0.25, p=0.4, l=0.6)
    cdseiz = CdSeizParams(1.2, 0.5, 0.4, 0.25, p=(0.5, 0.2, 0.1),
                          l=(0.5, 0.5, 0.5))
    n = 20000.0

    def integrate_seiz():
        integrate(seiz, [n - 10.0, 0.0, 10.0, 0.0], n, grid)

    def integrate_cdseiz():
        y0 = [n - 12.0, 0.0, 4.0, 0.0, 0.0, 4.0, 0.0, 0.0, 4.0, 0.0]
        integrate(cdseiz, y0, n, grid)

    traj = integrate(seiz, [n - 10.0, 0.0, 10.0, 0.0], n, grid)
    counts = tuple(int(v) for v in np.round(infected_series(traj)))
    zeros = (0,) * len(counts)
    target = ActivitySeries(t0=datetime(2023, 1, 1, tzinfo=timezone.utc),
                            horizon_hours=len(counts) - 1, retweet=counts,
                            quote=zeros, reply=zeros, total=counts)
    cfg = FitConfig(model_kind=ModelKind.SEIZ)
    theta = np.array([1.1, 0.4, 0.5, 0.3, 0.45, 0.55, 22000.0])

    def objective_seiz():
        objective(theta, target, cfg)

    return [
        ("integrate seiz (49 obs x 10 substeps)", integrate_seiz),
        ("integrate cdseiz (dim 10)", integrate_cdseiz),
        ("objective eval seiz", objective_seiz),
    ]


def _time_workload(func) -> float:
    func()  # warm: JIT compile or first-touch caches
    t0 = time.perf_counter()
    func()
    once = max(time.perf_counter() - t0, 1e-7)
    reps = max(3, min(5000, int(TARGET_SECONDS / once)))
    best = float("inf")
    for _ in range(3):
        t0 = time.perf_counter()
        for _ in range(reps):
            func()
        best = min(best, (time.perf_counter() - t0) / reps)
    return best


def run_worker() -> None:
    results = {}
    for name, func in _workloads():
        results[name] = _time_workload(func)
    json.dump(results, sys.stdout)


def run_parent() -> int:
    here = os.path.abspath(__file__)
    out = {}
    for label, extra_env in (("numba", {"CASCADEFIT_NO_NUMBA": "0"}),
                             ("fallback", {"CASCADEFIT_NO_NUMBA": "1"})):
        env = dict(os.environ, **extra_env)
        proc = subprocess.run([sys.executable, here, "--worker"],
                              capture_output=True, text=True, env=env)
        if proc.returncode != 0:
            sys.stderr.write(proc.stderr)
            return 1
        out[label] = json.loads(proc.stdout)

    width = max(len(k) for k in out["numba"])
    print(f"{'workload':<{width}}  {'numba':>12}  {'fallback':>12}  {'speedup':>8}")
    for name, jitted in out["numba"].items():
        plain = out["fallback"][name]
        print(f"{name:<{width}}  {jitted * 1e6:>10.1f}us  {plain * 1e6:>10.1f}us  "
              f"{plain / jitted:>7.1f}x")
    return 0


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--worker", action="store_true",
                        help="run the timing workloads and emit JSON")
    args = parser.parse_args()
    if args.worker:
        run_worker()
        return 0
    return run_parent()


if __name__ == "__main__":
    sys.exit(main())
