"""Paired-seed ablation in sim mode: budget-aware UCT vs vanilla UCT vs greedy."""

from __future__ import annotations

import argparse
import json

import numpy as np
from scipy import stats

from mars.ablation import ablation


def summarize(res: dict) -> dict:
    ba, va = res["budget_aware"], res["vanilla"]
    # one-sided paired tests in both directions on effective solution rate
    worse = stats.ttest_rel(ba["esr"], va["esr"], alternative="less")
    better = stats.ttest_rel(ba["esr"], va["esr"], alternative="greater")
    return {
        "mean_nodes": {a: float(r["nodes"].mean()) for a, r in res.items()},
        "mean_esr": {a: float(r["esr"].mean()) for a, r in res.items()},
        "mean_best_quality": {a: float(np.nanmean(r["best_quality"])) for a, r in res.items()},
        "esr_diff_mean": float((ba["esr"] - va["esr"]).mean()),
        "p_worse": float(worse.pvalue),
        "p_better": float(better.pvalue),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=50)
    ap.add_argument("--budget", type=float, default=200.0)
    ap.add_argument("--landscape", type=json.loads, default={}, help="JSON overrides for LandscapeParams")
    args = ap.parse_args(argv)
    print(json.dumps(summarize(ablation(args.seeds, args.budget, args.landscape)), indent=2))


if __name__ == "__main__":
    main()
