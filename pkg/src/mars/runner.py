"""Wire a RunConfig to search workers and write the run's artifacts."""

from __future__ import annotations

import json
import shutil
import threading
from dataclasses import dataclass
from pathlib import Path

from .budget import WallClock
from .config import RunConfig
from .drivers.http import ChatClient, TokenBucket
from .drivers.llm import LLMGenerator
from .export import tree_dot, write_atomic, write_tree
from .harness import SubprocessHarness
from .lessons import LessonPool, ShingleReviewer
from .metrics import RunReport, best_series_csv, build_report
from .repo import materialize
from .search import BestRegister, SearchResult, run_forest
from .simulator import Simulator
from .trajectory import TrajectoryLog

ARTIFACTS = ("trajectory.jsonl", "report.json", "best_series.csv", "config.json", "best.json", "tree.dot")
ARTIFACT_DIRS = ("lessons", "best", "nodes")


@dataclass
class RunOutcome:
    report: RunReport
    results: list[SearchResult]
    best: BestRegister
    sims: list[Simulator]


def clean_run_dir(out: Path) -> None:
    """Remove artifacts of a previous run so reruns are idempotent."""
    for name in ARTIFACTS:
        (out / name).unlink(missing_ok=True)
    for p in out.glob("tree-*.json"):
        p.unlink()
    for p in out.glob("tree-*.dot"):
        p.unlink()
    for name in ARTIFACT_DIRS:
        shutil.rmtree(out / name, ignore_errors=True)


def execute_run(cfg: RunConfig, write_trees_each_iteration: bool = True) -> RunOutcome:
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    clean_run_dir(out)
    write_atomic(out / "config.json", json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")

    log = TrajectoryLog(out / "trajectory.jsonl", wall_timestamps=cfg.mode == "llm")
    pool = LessonPool(out / "lessons")
    sims: list[Simulator] = []
    tree_lock = threading.Lock()

    def snapshot(search):
        with tree_lock:
            write_tree(search.state, out)

    try:
        log.emit("run_started", config=cfg.to_dict())
        if cfg.mode == "sim":
            make_worker, metric, dedup = _sim_workers(cfg, sims), cfg.metric, None
        else:
            make_worker, metric, dedup = _llm_workers(cfg, log, out)
        results, best = run_forest(
            cfg.search, make_worker, pool, task=cfg.task, metric=metric, reward=cfg.reward, log=log,
            review_mode=cfg.review, dedup=dedup,
            on_iteration=snapshot if write_trees_each_iteration else None,
        )
        for r in results:
            write_tree(r.tree, out)
            write_atomic(out / f"tree-{r.tree.tree}.dot", tree_dot(json.loads(
                (out / f"tree-{r.tree.tree}.json").read_text(encoding="utf-8"))))
        if best.solution is not None:
            materialize(best.solution, out / "best")
            write_atomic(out / "best.json", json.dumps({
                "tree": best.tree, "node": best.node, "metric": best.metric, "oriented": best.score,
                "main": best.solution.main,
            }, indent=2) + "\n")
        log.emit("run_finished", status="ok" if best.solution is not None else "no-solution")
    finally:
        log.close()

    report = build_report(log.events)
    write_atomic(out / "report.json", json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    write_atomic(out / "best_series.csv", best_series_csv(report))
    return RunOutcome(report, results, best, sims)


def _sim_workers(cfg: RunConfig, sims: list):
    def make(tree: int):
        sim = Simulator(cfg.landscape, cfg.metric, tree)
        sims.append(sim)
        return sim, sim, sim.clock
    return make


def _llm_workers(cfg: RunConfig, log: TrajectoryLog, out: Path):
    opts = cfg.llm_options
    ep = cfg.endpoint
    limiter = TokenBucket(ep.requests_per_minute) if ep.requests_per_minute else None
    clock = WallClock()
    record_to = opts.get("record_to")
    if record_to:
        record_to = out / record_to

    def make_client(tree: int) -> ChatClient:
        def recorder(call: dict):
            log.emit("model_call", tree, None, clock.elapsed(), purpose=call["purpose"], status=call["status"],
                     attempts=call["attempts"], seconds=call["seconds"], prompt_chars=call["prompt_chars"],
                     response_chars=len(call["response"] or ""), error=call["error"])
        return ChatClient(ep, recorder=recorder, limiter=limiter, record_to=record_to)

    def make_gen(tree: int, metric=None) -> LLMGenerator:
        return LLMGenerator(make_client(tree), prompt_dir=cfg.prompts,
                            submission_cond=opts.get("submission_cond", ""),
                            idea_budget=opts.get("idea_budget", 8000),
                            test_modules=bool(opts.get("test_modules", False)), metric=metric)

    metric = cfg.metric or make_gen(0).parse_metric_spec(cfg.task)
    dedup = ShingleReviewer() if opts.get("dedup") == "shingle" else None
    harness_opts = {}
    if cfg.harness.get("entry_command"):
        harness_opts["entry_command"] = cfg.harness["entry_command"]
    if cfg.harness.get("output_cap"):
        harness_opts["output_cap"] = cfg.harness["output_cap"]

    def make(tree: int):
        gen = make_gen(tree, metric)
        return gen, SubprocessHarness(out / "nodes" / f"tree-{tree}", **harness_opts), clock

    return make, metric, dedup
