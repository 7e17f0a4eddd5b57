"""Print the efficiency reward as a function of t/L for several penalty weights (CSV)."""

from __future__ import annotations

import argparse

import numpy as np

from mars.reward import ExecutionCost, RewardParams, efficiency_reward


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--weights", type=float, nargs="+", default=[0.0, -0.07, -0.2, -0.5])
    ap.add_argument("--g", type=float, default=0.8, help="normalized score held fixed")
    ap.add_argument("--points", type=int, default=11)
    args = ap.parse_args(argv)
    params = [RewardParams(w) for w in args.weights]
    print("t_over_L," + ",".join(f"w={w:g}" for w in args.weights))
    for frac in np.linspace(0.05, 1.0, args.points):
        cost = ExecutionCost(float(frac), 1.0)
        print(f"{frac:.3f}," + ",".join(f"{efficiency_reward(args.g, cost, p):.6f}" for p in params))


if __name__ == "__main__":
    main()
