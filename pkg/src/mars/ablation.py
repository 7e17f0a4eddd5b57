"""Paired-seed sim ablation arms: budget-aware UCT, vanilla UCT, greedy."""

from __future__ import annotations

import numpy as np

from .lessons import LessonPool
from .metrics import effective_solution_rate
from .reward import RewardParams
from .search import SearchConfig, run_search
from .simulator import LandscapeParams, Simulator
from .trajectory import TrajectoryLog

ARMS = {
    "budget_aware": dict(policy="uct", w=-0.07),
    "vanilla": dict(policy="uct", w=0.0),
    "greedy": dict(policy="greedy", w=-0.07),
}


def run_arm(seed: int, policy: str, w: float, budget: float = 200.0, landscape: dict | None = None) -> dict:
    sim = Simulator(LandscapeParams(seed=seed, **(landscape or {})))
    log = TrajectoryLog()
    cfg = SearchConfig(time_budget=budget, seed=seed, policy=policy)
    res = run_search(cfg, sim, sim, LessonPool(), log=log, reward=RewardParams(w))
    best = res.best
    return {
        "nodes": len(res.tree.nodes) - 1,
        "esr": effective_solution_rate(log.events),
        "best_quality": sim.true_quality(sim.latent_id(best.solution)) if best else float("nan"),
    }


def ablation(seeds: int = 50, budget: float = 200.0, landscape: dict | None = None) -> dict:
    """Run every arm on seeds 0..seeds-1; returns arm -> measure -> array over seeds."""
    out = {arm: {"nodes": [], "esr": [], "best_quality": []} for arm in ARMS}
    for seed in range(seeds):
        for arm, kw in ARMS.items():
            for k, v in run_arm(seed, kw["policy"], kw["w"], budget, landscape).items():
                out[arm][k].append(v)
    return {arm: {k: np.asarray(v) for k, v in d.items()} for arm, d in out.items()}
