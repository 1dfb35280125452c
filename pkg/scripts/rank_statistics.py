"""Friedman statistic and Nemenyi critical difference for a methods x datasets score table.

Input is JSON ``{"methods": [...], "datasets": [...], "scores": [[...], ...]}`` with one
row per method (higher is better).
"""

import argparse
import json

import numpy as np
from scipy.stats import chi2

from mvsupgcn.evaluation import friedman_statistic, nemenyi_cd, rank_table


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("table", help="JSON score table")
    parser.add_argument("--alpha", type=float, default=0.05, choices=(0.05, 0.10))
    args = parser.parse_args()
    data = json.loads(open(args.table).read())
    scores = np.asarray(data["scores"], dtype=float)
    methods = data.get("methods") or [f"m{i + 1}" for i in range(scores.shape[0])]
    ranks = rank_table(scores)
    K, N = ranks.shape
    stat = friedman_statistic(ranks)
    print(f"Friedman chi2 = {stat:.3f}  (K={K}, N={N}, p = {chi2.sf(stat, K - 1):.2e})")
    print(f"Nemenyi CD (alpha={args.alpha}) = {nemenyi_cd(K, N, args.alpha):.3f}")
    for name, r in sorted(zip(methods, ranks.mean(axis=1)), key=lambda t: t[1]):
        print(f"  {r:5.2f}  {name}")


if __name__ == "__main__":
    main()
