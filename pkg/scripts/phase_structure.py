"""Stick/slip phase tables for both presets from z0 = (0, 1, 0).

Prints each phase with its duration and the sliding speed at stick entry,
which is the information carried by the time histories of the two presets.
"""

import argparse

import numpy as np

from stickslip import PRESETS, SimOptions, simulate
from stickslip.model import dist_to_attractor_z


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--horizon", type=float, default=40.0)
    args = parser.parse_args()
    for name, params in PRESETS.items():
        tr = simulate(np.array([0.0, 1.0, 0.0]), params, SimOptions(horizon=args.horizon))
        print(f"\n{name}  {params}")
        print(f"{'kind':>6} {'start':>9} {'duration':>9} {'s at start':>12}")
        for ph in tr.phases:
            s = tr.z[np.searchsorted(tr.times, ph.t_start), 1]
            print(f"{ph.kind:>6} {ph.t_start:9.4f} {ph.duration:9.4f} {s:12.4e}")
        z = tr.z[-1]
        print(f"final z = {z}, |z|_A = {dist_to_attractor_z(z, params):.3e}, "
              f"band f_c/k_i = {params.ei_band:g}")


if __name__ == "__main__":
    main()
