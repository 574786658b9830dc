#!/usr/bin/env python3
"""Sweep the analytic cost of the two correlation routes.

Prints, for each spatial size and neighbor window, the multiply-add counts of
the all-pairs affinity route and the compressed-descriptor route plus their
ratio, then fits ratio against spatial area to show the linear advantage
growth. Pure arithmetic; runs in milliseconds.
"""

import argparse

import numpy as np

from stcorr.flops import count_compressed_correlation, count_pairwise_correlation


def sweep(frames, channels, sides, windows):
    rows = []
    for side in sides:
        for window in windows:
            pairwise = count_pairwise_correlation(
                frames, channels, side, side, neighbors=window).total_flops
            compressed = count_compressed_correlation(
                frames, channels, side, side, window=window).total_flops
            rows.append((side, window, pairwise, compressed, pairwise / compressed))
    return rows


def linear_fit(frames, channels, window, sides):
    areas = np.array([s * s for s in sides], dtype=float)
    ratios = np.array([
        count_pairwise_correlation(frames, channels, s, s, neighbors=window).total_flops
        / count_compressed_correlation(frames, channels, s, s, window=window).total_flops
        for s in sides
    ])
    slope, intercept = np.polyfit(areas, ratios, 1)
    predicted = slope * areas + intercept
    ss_res = float(np.sum((ratios - predicted) ** 2))
    ss_tot = float(np.sum((ratios - ratios.mean()) ** 2))
    return slope, intercept, 1.0 - ss_res / ss_tot


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--frames", type=int, default=4)
    parser.add_argument("--channels", type=int, default=128)
    parser.add_argument("--sides", type=int, nargs="+", default=[7, 14, 28, 56])
    parser.add_argument("--windows", type=int, nargs="+", default=[2, 6, 10])
    args = parser.parse_args(argv)

    print(f"T={args.frames} C={args.channels}")
    print(f"{'H=W':>5} {'L':>3} {'pairwise':>16} {'compressed':>14} {'ratio':>9}")
    for side, window, pairwise, compressed, ratio in sweep(
            args.frames, args.channels, args.sides, args.windows):
        print(f"{side:>5} {window:>3} {pairwise:>16,} {compressed:>14,} {ratio:>8.1f}x")

    for window in args.windows:
        slope, intercept, r2 = linear_fit(args.frames, args.channels, window, args.sides)
        print(f"ratio vs area at L={window}: "
              f"slope={slope:.4f} intercept={intercept:.2f} R^2={r2:.5f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
