"""Metric orientation, global normalization and the efficiency-guided reward.

Everything downstream of ``oriented_metric`` works on maximization values,
so a lower-is-better metric such as RMSE is negated once at the boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

from .errors import EmptyHistory, InvalidCost, InvalidMetric


@dataclass(frozen=True)
class MetricSpec:
    name: str
    lower_is_better: bool = False

    def __post_init__(self):
        if not self.name:
            raise ValueError("metric name must be non-empty")


@dataclass(frozen=True)
class RewardParams:
    # Penalty exponent on t/L; 0 reproduces the vanilla (cost-blind) reward.
    w: float = -0.07

    def __post_init__(self):
        if not (-1.0 < self.w <= 0.0):
            raise ValueError(f"reward.w must lie in (-1, 0], got {self.w}")


@dataclass(frozen=True)
class ExecutionCost:
    t: float
    L: float

    def __post_init__(self):
        if not (self.L > 0):
            raise InvalidCost(f"time limit must be positive, got {self.L}")
        if not (self.t > 0):
            raise InvalidCost(f"execution time must be positive, got {self.t}")
        if self.t > self.L:
            raise InvalidCost(f"execution time {self.t} exceeds limit {self.L}")

    @classmethod
    def clamped(cls, t: float, L: float) -> "ExecutionCost":
        return cls(min(t, L), L)


def oriented_metric(m: float, spec: MetricSpec) -> float:
    if not math.isfinite(m):
        raise InvalidMetric(f"metric {spec.name} is not finite: {m!r}")
    return -m if spec.lower_is_better else m


def global_normalized_score(v_metric: float, history: Iterable[float]) -> float:
    """Min-max normalize ``v_metric`` against the oriented metrics of all valid nodes.

    Returns exactly 0.5 when every value in the history is equal.
    """
    values = list(history)
    if not values:
        raise EmptyHistory("normalization needs at least one valid node")
    lo, hi = min(values), max(values)
    if hi == lo:
        return 0.5
    g = (v_metric - lo) / (hi - lo)
    return min(1.0, max(0.0, g))


def efficiency_reward(g: float, cost: ExecutionCost, params: RewardParams) -> float:
    if cost.t <= 0:
        raise InvalidCost(f"execution time must be positive, got {cost.t}")
    if params.w == 0:
        return g
    return g * (cost.t / cost.L) ** params.w


def is_improved(candidate: float, incumbent: float | None) -> bool:
    return incumbent is None or candidate > incumbent
