#!/usr/bin/env python3
"""Distance table for the basic pipeline: how far the repaired frame moves
as a function of the input nearness parameter, against the 100*d^2*n*eps
budget."""

import argparse

import numpy as np

from frameflow.core import eps_nearness
from frameflow.generate import near_parseval_frame
from frameflow.paulsen import solve_basic


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--d", type=int, default=3)
    ap.add_argument("--n", type=int, default=12)
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    d, n = args.d, args.n
    print(f"basic pipeline, d={d} n={n}, {args.trials} trials per row")
    print(f"{'eps_req':>9} {'eps_meas':>10} {'mean_dist':>11} {'max_dist':>11} "
          f"{'bound':>11} {'max/bound':>10}")
    for eps in (0.0003, 0.001, 0.003, 0.01, 0.03):
        dists, bounds, measured = [], [], []
        for t in range(args.trials):
            u, _ = near_parseval_frame(d, n, eps, (args.seed, t))
            e = eps_nearness(u)
            _, report = solve_basic(u)
            dists.append(report.dist)
            bounds.append(100.0 * d * d * n * e)
            measured.append(e)
        ratio = max(x / b for x, b in zip(dists, bounds))
        print(f"{eps:9.4f} {np.mean(measured):10.5f} {np.mean(dists):11.3e} "
              f"{max(dists):11.3e} {np.mean(bounds):11.3e} {ratio:10.2e}")


if __name__ == "__main__":
    main()
