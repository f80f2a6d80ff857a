"""Time the compiled loop against the pure-Python fallback.

    python3 benchmarks/bench_backends.py [--steps 20000]

Both backends run the same trajectories (same seeds, same normals); the
script checks that the final estimates agree before reporting speeds.
"""
import argparse
import time

import numpy as np

from abpsim import _backend
from abpsim.engine import ABPSetup, SimConfig, run_abp, run_fixed_bias
from abpsim.kernel import KernelSpec
from abpsim.model import DynamicsSpec, potential_preset
from abpsim.spde import SpdeModel, run_spde_abp


def cases():
    dw = potential_preset("double_well1d")
    t2 = potential_preset("t2_coupled")
    yield "brownian 1-D adaptive", lambda sim, b: run_abp(
        ABPSetup(DynamicsSpec("brownian", dw), x0=(0.5,)), sim, backend=b)
    yield "brownian 1-D fixed bias", lambda sim, b: run_fixed_bias(
        ABPSetup(DynamicsSpec("brownian", dw), x0=(0.5,)), sim, np.zeros(256), backend=b)
    yield "langevin 1-D adaptive", lambda sim, b: run_abp(
        ABPSetup(DynamicsSpec("langevin", dw), x0=(0.5,)), sim, backend=b)
    yield "extended 1-D adaptive", lambda sim, b: run_abp(
        ABPSetup(DynamicsSpec("extended", dw), x0=(0.5,)), sim, backend=b)
    yield "brownian T^2 adaptive", lambda sim, b: run_abp(
        ABPSetup(DynamicsSpec("brownian", t2), x0=(0.5, 0.0)), sim, backend=b)
    yield "spde cosine adaptive", lambda sim, b: run_spde_abp(
        SpdeModel("cosine"), KernelSpec(), sim, backend=b)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=20000)
    args = ap.parse_args(argv)
    if "compiled" not in _backend.available:
        raise SystemExit("the compiled extension is not built; nothing to compare")
    sim = SimConfig(dt=1e-3, t_final=args.steps * 1e-3, seed=1)
    print(f"{'case':26s} {'compiled us/step':>17s} {'python us/step':>15s} {'speedup':>8s}")
    for name, run in cases():
        timings, reports = {}, {}
        for b in ("compiled", "python"):
            run(SimConfig(dt=1e-3, t_final=0.01, seed=1), b)  # warm caches
            t0 = time.perf_counter()
            reports[b] = run(sim, b)
            timings[b] = (time.perf_counter() - t0) / args.steps * 1e6
        key = reports["compiled"].names[0]
        diff = abs(reports["compiled"].mu_bar[key] - reports["python"].mu_bar[key])
        flag = "" if diff < 1e-8 else f"  (estimates differ by {diff:.2e})"
        print(f"{name:26s} {timings['compiled']:17.2f} {timings['python']:15.2f} "
              f"{timings['python'] / timings['compiled']:7.0f}x{flag}")


if __name__ == "__main__":
    main()
