#!/usr/bin/env python3
"""Hankel matrix size and held-out error for coarse, fine and row/column-spaced embeddings."""

import argparse
import sys
from pathlib import Path

from multiscale_discovery.harness import spacing_tradeoff_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--F", default="4,8,16")
    ap.add_argument("--rank", type=int, default=100)
    ap.add_argument("--out", default="results")
    args = ap.parse_args()

    grid = [int(f) for f in args.F.split(",")]
    result = spacing_tradeoff_sweep(grid, r=args.rank, progress=lambda m: print(m, file=sys.stderr))
    result.save(Path(args.out) / "spacing-tradeoff")
    print(f"{'F':>4} {'model':>9} {'numel':>10} {'nRMSE':>9}")
    for cell in result.cells:
        rec = cell["records"][0]
        err = "failed" if rec.get("failed") else f"{rec['rmse']:.4f}"
        print(f"{cell['params']['F']:>4} {cell['params']['model']:>9} {rec['numel']:>10} {err:>9}")


if __name__ == "__main__":
    main()
