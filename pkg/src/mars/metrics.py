"""Run metrics recomputed purely from the event log."""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

GENERATING_ACTIONS = ("draft", "improve", "debug")


def improvement_flags(scores: Iterable[float]) -> list[bool]:
    """For each oriented score in creation order: did it strictly beat the running best?"""
    flags, best = [], None
    for s in scores:
        hit = best is None or s > best
        flags.append(hit)
        if hit:
            best = s
    return flags


def effective_solution_rate(events: Sequence[dict] | Sequence[float]) -> float:
    """Fraction of valid solutions that improved their tree's incumbent when they appeared.

    Accepts either an event log or a plain list of oriented scores (one tree).
    """
    if events and not isinstance(events[0], dict):
        flags = improvement_flags(events)
        return sum(flags) / len(flags)
    per_tree: dict[int, list[float]] = defaultdict(list)
    for e in events:
        if e["kind"] == "reviewed" and e["status"] == "valid":
            per_tree[e["tree"]].append(e["oriented"])
    hits = total = 0
    for scores in per_tree.values():
        flags = improvement_flags(scores)
        hits += sum(flags)
        total += len(flags)
    return hits / total if total else 0.0


def utilization_metrics(events: Sequence[dict]) -> dict:
    """Share of generated solutions that cite lessons, and share of solution-lesson
    citations that come from another branch (or another tree)."""
    generated = citing = 0
    cross = same = 0
    for e in events:
        if e["kind"] == "node_created" and e["action"] in GENERATING_ACTIONS:
            generated += 1
            citing += bool(e["citations"])
        elif e["kind"] == "lesson_cited" and e["category"] == "solution":
            if (e["origin_tree"], e["origin_branch"]) == (e["tree"], e["branch"]):
                same += 1
            else:
                cross += 1
    return {
        "utilization_rate": citing / generated if generated else 0.0,
        "transfer_rate": cross / (cross + same) if cross + same else 0.0,
        "generated": generated,
        "citing": citing,
        "solution_citations": cross + same,
        "cross_branch_citations": cross,
    }


@dataclass
class RunReport:
    best_series: list[dict] = field(default_factory=list)
    best: dict | None = None
    effective_solution_rate: float = 0.0
    utilization_rate: float = 0.0
    transfer_rate: float = 0.0
    nodes_by_status: dict = field(default_factory=dict)
    nodes_by_action: dict = field(default_factory=dict)
    lessons: dict = field(default_factory=dict)
    best_repo_stats: dict | None = None
    trees: dict = field(default_factory=dict)
    no_solution: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


def build_report(events: Sequence[dict]) -> RunReport:
    report = RunReport()
    status: dict[tuple, str] = {}
    action: dict[tuple, str] = {}
    stats: dict[tuple, dict | None] = {}
    global_best = None
    lesson_counts: Counter = Counter()
    for e in events:
        kind, key = e["kind"], (e["tree"], e["node"])
        if kind == "node_created":
            action[key] = e["action"]
            status[key] = "draft-pending"
            stats[key] = e.get("stats")
        elif kind == "reviewed":
            status[key] = e["status"]
        elif kind == "best_updated":
            # the series tracks the run-wide best; each tree reports its own improvements
            if global_best is None or e["oriented"] > global_best:
                global_best = e["oriented"]
                report.best_series.append({"time": e["time"], "tree": e["tree"], "node": e["node"],
                                           "metric": e["metric"], "oriented": e["oriented"]})
        elif kind in ("lesson_added", "lesson_rejected", "lesson_quarantined"):
            lesson_counts[f"{kind.split('_')[1]}:{e['category']}"] += 1
        elif kind == "citation_miss":
            lesson_counts["citation_miss"] += 1
        elif kind == "search_finished":
            report.trees[str(e["tree"])] = {"best": e["best"], "nodes": e["nodes"], "elapsed": e["elapsed"]}
    if report.best_series:
        last = report.best_series[-1]
        report.best = dict(last)
        report.best_repo_stats = stats.get((last["tree"], last["node"]))
        report.no_solution = False
    report.effective_solution_rate = effective_solution_rate(events)
    util = utilization_metrics(events)
    report.utilization_rate = util["utilization_rate"]
    report.transfer_rate = util["transfer_rate"]
    report.nodes_by_status = dict(sorted(Counter(status.values()).items()))
    report.nodes_by_action = dict(sorted(Counter(action.values()).items()))
    report.lessons = dict(sorted(lesson_counts.items()))
    return report


def best_series_csv(report: RunReport) -> str:
    lines = ["time,tree,node,metric,oriented"]
    for p in report.best_series:
        lines.append(f"{p['time']!r},{p['tree']},{p['node']},{p['metric']!r},{p['oriented']!r}")
    return "\n".join(lines) + "\n"
