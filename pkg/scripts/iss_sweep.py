"""Run the rho_v sweep for one or more configurations and print the table.

Defaults to the two JSON files next to this script.
"""

import argparse
import csv
import sys
from pathlib import Path

from stickslip.cli import main as cli_main

HERE = Path(__file__).resolve().parent


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument(
        "configs",
        nargs="*",
        type=Path,
        default=[HERE / "configs" / "iss_sweep_case_b.json", HERE / "configs" / "iss_sweep_case_a.json"],
    )
    parser.add_argument("--out", type=Path, default=Path("out"))
    args = parser.parse_args()
    status = 0
    for cfg in args.configs:
        out = args.out / cfg.stem
        code = cli_main(["iss-sweep", "--config", str(cfg), "--out", str(out)])
        status = max(status, code)
        print(f"\n{cfg.name} (exit {code})")
        with open(out / "sweep.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        print(f"{'rho_v':>6} {'ic':>3} {'tail sup':>10} {'envelope':>9} {'norm margin':>12} {'phases':>7}")
        for r in rows:
            print(
                f"{float(r['rho_v']):6.2f} {r['ic']:>3} {float(r['tail_sup']):10.3e} "
                f"{float(r['envelope']):9.2f} {float(r['norm_margin']):12.3e} {r['n_phases']:>7}"
            )
    sys.exit(status)


if __name__ == "__main__":
    main()
