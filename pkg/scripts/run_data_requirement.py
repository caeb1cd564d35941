#!/usr/bin/env python3
"""Minimal identifying duration per sampling rate for the four benchmark systems.

Example:
    python3 scripts/run_data_requirement.py --rates 64,256,1024,4096 --trials 20 --seed 0
"""

import argparse
import sys
from pathlib import Path

from multiscale_discovery.dynamics import make_system
from multiscale_discovery.harness import data_requirement_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--systems", default="lorenz,duffing,vanderpol,rossler")
    ap.add_argument("--rates", default="4096", help="comma-separated powers of two, samples per period")
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--seed", type=int, required=True)
    ap.add_argument("--out", default="results")
    args = ap.parse_args()

    rates = [int(r) for r in args.rates.split(",")]
    for name in args.systems.split(","):
        result = data_requirement_sweep(make_system(name), rates, args.trials, args.seed,
                                        progress=lambda m, n=name: print(f"{n}: {m}", file=sys.stderr))
        js, _ = result.save(Path(args.out) / f"data-requirement-{name}")
        for cell in result.cells:
            s = cell["summary"]
            print(f"{name:10s} rate {cell['params']['rate']:6d}  mean {s.get('mean', float('nan')):.3f}  "
                  f"range [{s.get('min')}, {s.get('max')}]  failed {s['n_failed']}  anomalies {len(result.anomalies)}")
        print(f"  -> {js}")


if __name__ == "__main__":
    main()
