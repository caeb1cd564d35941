#!/usr/bin/env python3
"""Single-scale delay-embedding models: rank and delay study on Van der Pol, then the three periodic orbits."""

import argparse
from pathlib import Path

from multiscale_discovery.dynamics import make_system
from multiscale_discovery.harness import periodic_orbit_study, rank_delay_study


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results")
    args = ap.parse_args()
    out = Path(args.out)

    study = rank_delay_study(make_system("vanderpol"), ranks=(2, 8, 32), delay_counts=(8, 64))
    study.save(out / "rank-delay-vanderpol")
    for cell in study.cells:
        rec = cell["records"][0]
        if cell["params"]["kind"] == "rank":
            print(f"rank {cell['params']['rank']:3d}: train {rec['train_rmse']:.4f}  test {rec['test_rmse']:.4f}")
        else:
            print(f"delays {cell['params']['delays']:3d}: first singular value carries {rec['energy_first']:.1%}")

    orbits = periodic_orbit_study()
    orbits.save(out / "havok-periodic")
    for cell in orbits.cells:
        rec = cell["records"][0]
        p = cell["params"]
        print(f"{p['system']:10s} rank {p['rank']:3d}  period {rec['period']:.4f}  test nRMSE {rec['test_rmse']:.4f}  "
              f"freq model/data {rec['model_frequency']:.5f}/{rec['data_frequency']:.5f}")


if __name__ == "__main__":
    main()
