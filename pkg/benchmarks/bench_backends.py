"""Wall-clock comparison of the compiled and pure-Python simulator kernels.

Usage: python3 benchmarks/bench_backends.py [--trials N] [--duration S]
"""
import argparse
import time

import numpy as np

from momtopo import sim
from momtopo.exploration import sample_sinusoid
from momtopo.fixtures import chain3, prismatic_demo, revolute_demo


def time_backend(fixture, backend, trials, duration):
    cfg = sim.SimConfig(duration=duration)
    rng = np.random.default_rng(0)
    signals = [sample_sinusoid(rng, fixture.motion_mask) for _ in range(trials)]
    start = time.perf_counter()
    records = [sim.run_trial(fixture.spec, fixture.topology, s, cfg, backend=backend) for s in signals]
    return (time.perf_counter() - start) / trials, records


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--trials", type=int, default=3)
    parser.add_argument("--duration", type=float, default=5.0)
    args = parser.parse_args()

    if "cython" not in sim.BACKENDS:
        print("compiled backend not built; only the Python kernel is available")
    print(f"{'fixture':<16}{'backend':<10}{'s/trial':>10}{'speedup':>10}{'max |diff|':>14}")
    for fixture in (revolute_demo(), prismatic_demo(), chain3("RP")):
        base, ref = time_backend(fixture, "python", args.trials, args.duration)
        print(f"{fixture.name:<16}{'python':<10}{base:>10.3f}{1.0:>10.1f}{'':>14}")
        if "cython" in sim.BACKENDS:
            fast, rec = time_backend(fixture, "cython", args.trials, args.duration)
            diff = max(np.max(np.abs(a.positions - b.positions)) for a, b in zip(ref, rec))
            print(f"{fixture.name:<16}{'cython':<10}{fast:>10.3f}{base / fast:>10.1f}{diff:>14.1e}")


if __name__ == "__main__":
    main()
