#!/usr/bin/env python3
"""Benchmark the plant substep kernel: numba backend vs pure-numpy fallback.

Two workloads, both run in a subprocess per backend so kernel selection
(COPBALANCE_BACKEND) happens at import:

  kernel  - raw substep loop, one long uncontrolled run (hot path only)
  trial   - full seeded trial through sensing, telemetry and control

Usage: python benchmarks/bench_plant.py [--substeps N] [--trials N]
"""

import argparse
import os
import subprocess
import sys
import textwrap

WORKLOAD = textwrap.dedent(
    """
    import time
    import numpy as np
    from copbalance._accel import BACKEND
    from copbalance import _kernels
    from copbalance.control import PidGains
    from copbalance.harness import TrialConfig, run_trial
    from copbalance.plant import PlantParams, PlantState

    n_substeps = {substeps}
    n_trials = {trials}

    params = PlantParams(tilt_deg=2.0, fall_window_ms=1e12, roll_limit_rad=1e9)
    pv = params.as_vector()
    sv = PlantState(support="right").as_vector()
    cmds = np.array([1.0, 2.0, 2.0, 0.5, 0.5])
    _kernels.step_loop(sv.copy(), 2, cmds, pv, 10, 0.005)  # warm the JIT

    t0 = time.perf_counter()
    _kernels.step_loop(sv, 2, cmds, pv, n_substeps, 0.005)
    kernel_s = time.perf_counter() - t0

    cfg = TrialConfig(gains=PidGains(kp=0.10, kd=0.005), seed=0)
    run_trial(cfg, 0)  # warm everything on the trial path
    t0 = time.perf_counter()
    for i in range(n_trials):
        run_trial(cfg, i)
    trial_s = time.perf_counter() - t0

    print(f"{{BACKEND}} {{kernel_s:.6f}} {{trial_s:.6f}}")
    """
)


def run_backend(backend: str, substeps: int, trials: int):
    env = dict(os.environ, COPBALANCE_BACKEND=backend)
    code = WORKLOAD.format(substeps=substeps, trials=trials)
    out = subprocess.run([sys.executable, "-c", code], env=env,
                         capture_output=True, text=True, check=True)
    name, kernel_s, trial_s = out.stdout.split()
    return name, float(kernel_s), float(trial_s)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--substeps", type=int, default=2_000_000,
                        help="substeps for the raw kernel workload")
    parser.add_argument("--trials", type=int, default=20,
                        help="full trials for the end-to-end workload")
    args = parser.parse_args()

    results = {}
    for backend in ("numpy", "numba"):
        name, kernel_s, trial_s = run_backend(backend, args.substeps, args.trials)
        results[name] = (kernel_s, trial_s)
        print(f"{name:>6}: kernel {kernel_s * 1e3:9.2f} ms   "
              f"{args.trials} trials {trial_s * 1e3:9.2f} ms")
    if len(results) == 2:
        k_np, t_np = results["numpy"]
        k_nb, t_nb = results["numba"]
        print(f"speedup: kernel x{k_np / k_nb:.1f}, trials x{t_np / t_nb:.2f}")


if __name__ == "__main__":
    main()
