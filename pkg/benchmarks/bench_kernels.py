"""Benchmark the numba-compiled kernels against the numpy/Python fallback.

The backend is frozen at import time from EDGECACHE_NUMBA, so this script
re-runs itself in a subprocess per backend and prints a comparison table:

    python3 benchmarks/bench_kernels.py
"""

import json
import os
import subprocess
import sys
import time

CASES = ("dca_greedy", "dca_plus_run", "pfr_run", "simplex")


def run_cases():
    import numpy as np

    from edgecache._backend import backend_name
    from edgecache.cli import cell_seed, sweep_grid_config
    from edgecache.dynamic import run_dca_plus, run_pfr
    from edgecache.kpaths import compute_path_sets
    from edgecache.lpbench import build_lp, solve_lp
    from edgecache.schedule import data_cache_access
    from edgecache.topology import generate_instance

    inst = generate_instance(sweep_grid_config(7, 10), cell_seed(7, 7, 10, 0))
    ps = compute_path_sets(inst, 4)
    small = generate_instance(sweep_grid_config(5, 5), cell_seed(7, 5, 5, 0))
    model = build_lp(small)

    timings = {}

    def bench(name, fn, repeat):
        fn()  # warm-up / JIT
        t0 = time.perf_counter()
        for _ in range(repeat):
            fn()
        timings[name] = (time.perf_counter() - t0) / repeat

    bench("dca_greedy", lambda: data_cache_access(inst, ps), 20)
    bench("dca_plus_run",
          lambda: run_dca_plus(inst, ps, alpha=36000.0, collect_events=False), 3)
    bench("pfr_run",
          lambda: run_pfr(inst, ps, alpha=36000.0, collect_events=False), 10)
    bench("simplex", lambda: solve_lp(model), 3)
    print(json.dumps({"backend": backend_name(), "timings": timings}))


def main():
    if "--worker" in sys.argv:
        run_cases()
        return
    results = {}
    for flag in ("1", "0"):
        env = dict(os.environ, EDGECACHE_NUMBA=flag)
        out = subprocess.run(
            [sys.executable, os.path.abspath(__file__), "--worker"],
            env=env, capture_output=True, text=True, check=True)
        doc = json.loads(out.stdout.strip().splitlines()[-1])
        results[doc["backend"]] = doc["timings"]
    print(f"{'kernel':<14} {'numba':>12} {'numpy':>12} {'speedup':>9}")
    for case in CASES:
        a = results["numba"][case]
        b = results["numpy"][case]
        print(f"{case:<14} {a * 1e3:>10.2f}ms {b * 1e3:>10.2f}ms {b / a:>8.1f}x")


if __name__ == "__main__":
    main()
