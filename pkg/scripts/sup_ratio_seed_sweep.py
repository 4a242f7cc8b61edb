"""Seed sweep for the sup-ratio reference geometry (p=4, q=1, eta=0.5).

Prints sup_log_ratio / n per n for each master seed plus the mean, the spread
and the fraction of seeds whose per-n values are nonincreasing.
"""

import argparse

import numpy as np

from ppca_quotient.lab import ExperimentConfig, run_sup_ratio

ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
ap.add_argument("--seeds", type=int, default=30)
ap.add_argument("--first", type=int, default=1000)
ap.add_argument("--threads", type=int, default=4)
args = ap.parse_args()

grid = (1000, 10_000, 100_000)
table = []
for seed in range(args.first, args.first + args.seeds):
    cfg = ExperimentConfig(
        p=4, q=1, theta0_spec={"random": {"seed": 42}}, n_grid=grid, eta=0.5, master_seed=seed, threads=args.threads
    )
    per_n = [r.mean_log_ratio for r in run_sup_ratio(cfg).rows]
    table.append(per_n)
    print(seed, " ".join(f"{v:.5f}" for v in per_n))

a = np.array(table)
print("mean", a.mean(axis=0))
print("std ", a.std(axis=0, ddof=1))
print("monotone fraction", np.mean(np.all(np.diff(a, axis=1) <= 0, axis=1)))
