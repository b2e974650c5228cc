#!/usr/bin/env python3
"""Plot sweep/bench CSVs emitted by the stefanbench CLI.

Kept outside the package so the library has no graphics dependency.

    python scripts/plot_sweep.py sweep.csv --x C_tol --y E_zeta
    python scripts/plot_sweep.py bench.csv --x sn --y cpu_ns_cumulative --linear
"""

import argparse
import csv
from collections import defaultdict


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("csv_file")
    parser.add_argument("--x", default="C_tol")
    parser.add_argument("--y", default="E_zeta")
    parser.add_argument("--linear", action="store_true", help="linear axes instead of log-log")
    parser.add_argument("--out", default=None, help="save instead of showing")
    args = parser.parse_args()

    import matplotlib

    if args.out:
        matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    series = defaultdict(list)
    with open(args.csv_file, newline="") as fh:
        for row in csv.DictReader(fh):
            series[row["strategy"]].append((float(row[args.x]), float(row[args.y])))

    fig, ax = plt.subplots()
    for strategy, points in sorted(series.items()):
        points.sort()
        ax.plot([p[0] for p in points], [p[1] for p in points], marker="o", label=strategy)
    if not args.linear:
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.set_xlabel(args.x)
    ax.set_ylabel(args.y)
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    if args.out:
        fig.savefig(args.out, dpi=150, bbox_inches="tight")
        print(f"saved {args.out}")
    else:
        plt.show()


if __name__ == "__main__":
    main()
