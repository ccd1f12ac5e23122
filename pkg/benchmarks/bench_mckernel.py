"""Compare the compiled and NumPy Monte Carlo kernels.

    python3 benchmarks/bench_mckernel.py --trials 1000000 --repeat 5
"""
import argparse
import statistics
import time

import numpy as np

from bb84ir import mcsim
from bb84ir.optimizer import solve


def timed(config, backend, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        report = mcsim.simulate(config, backend=backend)
        times.append(time.perf_counter() - t0)
    return report.counts, times


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--trials", type=int, default=1_000_000)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--mu", type=float, default=0.4)
    parser.add_argument("--eta-t", type=float, default=0.015)
    args = parser.parse_args()

    config = mcsim.SimConfig(solve(args.mu, args.eta_t, eta_det=0.2), args.trials, seed=1)
    backends = [b for b in mcsim.BACKENDS if b != "cython" or mcsim._mckernel is not None]
    results = {b: timed(config, b, args.repeat) for b in backends}
    print(f"trials={args.trials} repeat={args.repeat} mu={args.mu} eta_t={args.eta_t}")
    for name, (_, times) in results.items():
        med = statistics.median(times)
        print(f"{name:>7}: median {med * 1e3:8.1f} ms  ({args.trials / med / 1e6:6.1f} M trials/s)")
    if len(results) == 2:
        (c_counts, c_t), (p_counts, p_t) = results["cython"], results["python"]
        print(f"speed-up: {statistics.median(p_t) / statistics.median(c_t):.1f}x, "
              f"counts identical: {np.array_equal(c_counts, p_counts)}")


if __name__ == "__main__":
    main()
