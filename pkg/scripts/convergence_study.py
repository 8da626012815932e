"""Exact simulator against the regularised oracle, and slow attractivity.

Part one: sup-distance between the event-driven solution and the smoothed
RK4 oracle as (eps, step) shrink. Part two: for twenty seeded random initial
states per preset, the time after which |z(t)|_A stays below 1e-3.
"""

import argparse

import numpy as np

from stickslip import PRESETS, SimOptions, simulate, simulate_regularized, trajectory_diff
from stickslip.model import CASE_A, dist_to_attractor_z

LEVELS = ((1e-3, 1e-4), (1e-4, 1e-5), (5e-5, 5e-6))


def oracle_table(horizon):
    z0 = np.array([0.0, 1.0, 0.0])
    exact = simulate(z0, CASE_A, SimOptions(horizon=horizon))
    grid = np.linspace(0.0, horizon, int(horizon * 100) + 1)
    prev = None
    print(f"{'eps':>8} {'step':>8} {'sup diff':>10} {'ratio':>6}")
    for eps, step in LEVELS:
        d = trajectory_diff(exact, simulate_regularized(z0, CASE_A, eps, step, horizon), grid)
        ratio = "" if prev is None else f"{prev / d:6.2f}"
        print(f"{eps:8.0e} {step:8.0e} {d:10.3e} {ratio}")
        prev = d


def settle_times(horizon, tol, seed):
    for name, params in PRESETS.items():
        rng = np.random.default_rng(seed)
        times = []
        for _ in range(20):
            tr = simulate(rng.uniform(-5, 5, 3), params, SimOptions(horizon=horizon, dense_output_dt=0.1))
            above = np.flatnonzero(dist_to_attractor_z(tr.z, params) > tol)
            times.append(tr.times[above[-1]] if above.size else 0.0)
        times = np.sort(times)
        print(f"{name}: time to stay below {tol:g} (s), horizon {horizon:g}")
        print("  " + " ".join(f"{t:.1f}" for t in times))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--horizon", type=float, default=40.0)
    parser.add_argument("--settle-horizon", type=float, default=3000.0)
    parser.add_argument("--tol", type=float, default=1e-3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    oracle_table(args.horizon)
    settle_times(args.settle_horizon, args.tol, args.seed)


if __name__ == "__main__":
    main()
