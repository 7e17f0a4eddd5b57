"""A seeded synthetic solution landscape that stands in for both the model and the executor.

Every random draw comes from its own Philox stream keyed by
``(seed, tree, position, purpose)``. A node's position is structural (third
draft, its second improvement, that one's first debug attempt, ...), so two
configurations that grow different trees still see identical outcomes at
every position they both visit.
"""

from __future__ import annotations

import hashlib
import math
import re
import zlib
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .budget import SimClock
from .drivers.contract import DraftResult, EditResult, SolutionView, TaskContext
from .harness import FAILURE, SUCCESS, TIMEOUT, ExecutionOutcome, ReviewRecord, parse_metric_line
from .lessons import DEBUG, SOLUTION, Lesson, ShingleReviewer
from .repo import DiffHunk, DiffSet, SolutionRepo, creation_diff
from .reward import ExecutionCost, MetricSpec

LATENT_LINE = re.compile(r"^LATENT_ID = (\d+)$", re.MULTILINE)


@dataclass
class LandscapeParams:
    draft_mean: float = 0.5
    draft_sd: float = 0.1
    improve_mean: float = 0.02
    improve_sd: float = 0.04
    gamma: float = 0.8
    bug_prob: float = 0.25
    fix_prob: float = 0.5
    cost_log_mean: float = math.log(3.0)
    cost_log_sd: float = 0.3
    # Heritable cost structure: one log-scale offset per draft, a small drift per improve.
    cost_branch_sd: float = 0.8
    cost_drift_sd: float = 0.1
    rho: float = 0.0
    lesson_boost: float = 0.01
    cite_prob: float = 0.6
    noise_sd: float = 0.005
    draft_overhead: float = 1.0
    edit_overhead: float = 0.5
    distill_overhead: float = 0.0
    seed: int = 0

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ValueError("; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        for name in ("bug_prob", "fix_prob", "cite_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                out.append(f"landscape.{name} must lie in [0, 1], got {v}")
        if not 0.0 < self.gamma <= 1.0:
            out.append(f"landscape.gamma must lie in (0, 1], got {self.gamma}")
        if not -1.0 <= self.rho <= 1.0:
            out.append(f"landscape.rho must lie in [-1, 1], got {self.rho}")
        for name in ("draft_sd", "improve_sd", "cost_log_sd", "cost_branch_sd", "cost_drift_sd", "noise_sd",
                     "draft_overhead", "edit_overhead", "distill_overhead"):
            if getattr(self, name) < 0:
                out.append(f"landscape.{name} must be non-negative")
        return out

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LatentSolution:
    quality: float
    buggy: bool
    cost_scale: float  # log-time offset inherited along a branch
    depth: int = 0  # number of improve steps since the draft
    cause: str = ""


def _purpose_code(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


_VOCAB = {
    "technique": ["gradient boosting", "label smoothing", "mixup", "early stopping", "cosine schedule",
                  "target encoding", "feature crosses", "dropout", "weight decay", "test-time augmentation",
                  "k-fold ensembling", "learning-rate warmup", "class reweighting", "stacking"],
    "component": ["feature pipeline", "model head", "optimizer", "data loader", "validation split",
                  "loss function", "training loop"],
    "effect": ["raised", "lowered", "stabilized", "did not change"],
    "error": ["shape mismatch in the model head", "missing column after merge", "CUDA out of memory",
              "wrong dtype passed to the loss", "file path not found", "NaN loss after warmup"],
    "check": ["assert tensor shapes before the forward pass", "validate the schema after every merge",
              "log memory use per batch", "cast inputs explicitly", "check paths at startup",
              "clip gradients and watch the loss"],
}


class Simulator:
    """Implements the generator contract and the execution harness for one tree."""

    def __init__(self, params: LandscapeParams | None = None, metric: MetricSpec | None = None,
                 tree: int = 0, clock: SimClock | None = None):
        self.params = params or LandscapeParams()
        self.metric = metric or MetricSpec("score")
        self.tree = tree
        self.clock = clock or SimClock()
        self.latents: dict[int, LatentSolution] = {}
        self.positions: dict[int, str] = {}
        self._children: Counter = Counter()
        self.reviewer = ShingleReviewer()
        self.exec_time = 0.0
        self.overhead = 0.0

    # -- randomness ----------------------------------------------------------

    def rng(self, node_id: int, purpose: str) -> np.random.Generator:
        pos = hashlib.blake2b(self.positions[node_id].encode(), digest_size=8).digest()
        words = np.frombuffer(pos, dtype=np.uint32).tolist()
        key = np.random.SeedSequence([self.params.seed, self.tree, *words, _purpose_code(purpose)])
        return np.random.Generator(np.random.Philox(key))

    def _place(self, node_id: int, parent: str, tag: str) -> None:
        self._children[(parent, tag)] += 1
        self.positions[node_id] = f"{parent}/{tag}{self._children[(parent, tag)]}"

    def _charge(self, dt: float):
        if dt > 0:
            self.clock.charge(dt)
            self.overhead += dt

    # -- latent bookkeeping --------------------------------------------------

    def latent_id(self, repo: SolutionRepo) -> int:
        m = LATENT_LINE.search(repo.modules.get("config.py", ""))
        if m is None:
            raise KeyError("repo carries no LATENT_ID")
        return int(m.group(1))

    def true_quality(self, node_id: int) -> float:
        return self.latents[node_id].quality

    def _placeholder_repo(self, node_id: int, technique: str) -> dict[str, str]:
        return {
            "config.py": f"LATENT_ID = {node_id}\n",
            "model.py": f'VARIANT = "{technique}"\n\n\ndef build():\n    return VARIANT\n',
            "runfile.py": "import config\nimport model\n\nprint(model.build(), config.LATENT_ID)\n",
        }

    def _retag(self, repo: SolutionRepo, node_id: int, technique: str) -> DiffSet:
        old_id = self.latent_id(repo)
        old_variant = re.search(r'^VARIANT = .*\n', repo.modules["model.py"], re.MULTILINE).group(0)
        return DiffSet((
            DiffHunk("config.py", f"LATENT_ID = {old_id}\n", f"LATENT_ID = {node_id}\n"),
            DiffHunk("model.py", old_variant, f'VARIANT = "{technique}"\n'),
        ))

    def _cite(self, rng: np.random.Generator, lessons: Sequence[Lesson]) -> set[str]:
        if not lessons or rng.random() >= self.params.cite_prob:
            return set()
        k = int(rng.integers(1, min(3, len(lessons)) + 1))
        picks = rng.choice(len(lessons), size=k, replace=False)
        return {lessons[int(i)].id for i in picks}

    def _word(self, rng: np.random.Generator, kind: str) -> str:
        words = _VOCAB[kind]
        return words[int(rng.integers(len(words)))]

    # -- generator contract --------------------------------------------------

    def parse_metric_spec(self, task: TaskContext) -> MetricSpec:
        return self.metric

    def draft(self, *, node_id: int, task: TaskContext, lessons: Sequence[Lesson],
              previous_ideas: Sequence[str]) -> DraftResult:
        p = self.params
        self._charge(p.draft_overhead)
        self._place(node_id, "", "d")
        rng = self.rng(node_id, "draft")
        quality = p.draft_mean + p.draft_sd * rng.standard_normal()
        scale = p.cost_branch_sd * rng.standard_normal()
        buggy = bool(rng.random() < p.bug_prob)
        technique = self._word(rng, "technique")
        citations = self._cite(self.rng(node_id, "cite"), lessons)
        self.latents[node_id] = LatentSolution(quality, buggy, scale, 0, "draft" if buggy else "")
        idea = f"baseline with {technique}"
        return DraftResult(idea, creation_diff(self._placeholder_repo(node_id, technique)), citations)

    def improve(self, *, node_id: int, task: TaskContext, repo: SolutionRepo, summary: str,
                lessons: Sequence[Lesson]) -> EditResult:
        p = self.params
        self._charge(p.edit_overhead)
        pid = self.latent_id(repo)
        parent = self.latents[pid]
        self._place(node_id, self.positions[pid], "i")
        rng = self.rng(node_id, "improve")
        citations = self._cite(self.rng(node_id, "cite"), lessons)
        shift = p.lesson_boost if citations else 0.0
        delta = p.improve_mean + shift + p.improve_sd * rng.standard_normal()
        quality = parent.quality + p.gamma ** parent.depth * delta
        scale = parent.cost_scale + p.cost_drift_sd * rng.standard_normal()
        buggy = bool(rng.random() < p.bug_prob)
        technique = self._word(rng, "technique")
        self.latents[node_id] = LatentSolution(quality, buggy, scale, parent.depth + 1, "improve" if buggy else "")
        return EditResult(self._retag(repo, node_id, technique), citations, f"try {technique}")

    def debug(self, *, node_id: int, task: TaskContext, repo: SolutionRepo, output: str,
              lessons: Sequence[Lesson]) -> EditResult:
        p = self.params
        self._charge(p.edit_overhead)
        pid = self.latent_id(repo)
        parent = self.latents[pid]
        self._place(node_id, self.positions[pid], "x")
        rng = self.rng(node_id, "debug")
        fixed = bool(rng.random() < p.fix_prob)
        citations = self._cite(self.rng(node_id, "cite"), lessons)
        self.latents[node_id] = LatentSolution(parent.quality, not fixed, parent.cost_scale, parent.depth,
                                               "" if fixed else "debug")
        technique = self._word(rng, "technique")
        return EditResult(self._retag(repo, node_id, technique), citations, "fixed" if fixed else "still failing")

    def distill_solution_lesson(self, *, node_id: int, best: SolutionView | None, new: SolutionView) -> Lesson:
        self._charge(self.params.distill_overhead)
        rng = self.rng(node_id, "lesson")
        technique, component = self._word(rng, "technique"), self._word(rng, "component")
        if best is None or best.metric is None:
            effect = "established"
        else:
            effect = "raised" if new.metric > best.metric else "did not raise"
        return Lesson(
            SOLUTION,
            f"{technique} in the {component}",
            {
                "causal_change": f"applied {technique} to the {component}",
                "impact_analysis": f"the validation metric {effect} relative to the best solution",
                "generalized_rule": f"prefer {technique} when the {component} limits generalization",
            },
        )

    def distill_debug_lesson(self, *, node_id: int, before: SolutionView, diff: DiffSet,
                             after: SolutionView) -> Lesson:
        self._charge(self.params.distill_overhead)
        rng = self.rng(node_id, "lesson")
        k = int(rng.integers(len(_VOCAB["error"])))
        return Lesson(
            DEBUG,
            f"fix for {_VOCAB['error'][k]}",
            {
                "efficacy": "the fix resolved the failure" if after.valid else "the fix did not resolve the failure",
                "failure_logic": f"the run failed because of {_VOCAB['error'][k]}",
                "detection_guidelines": _VOCAB["check"][k],
            },
        )

    def review_duplicate(self, existing: Sequence[Lesson], candidate: Lesson) -> bool:
        return self.reviewer(existing, candidate)

    def review_execution(self, *, node_id: int, task: TaskContext, repo: SolutionRepo,
                         output: str) -> ReviewRecord:
        metric = parse_metric_line(output)
        return ReviewRecord("simulated review", metric, metric is not None)

    # -- harness -------------------------------------------------------------

    def draw_time(self, node_id: int, latent: LatentSolution) -> float:
        p = self.params
        rng = self.rng(node_id, "cost")
        zq = (latent.quality - p.draft_mean) / p.draft_sd if p.draft_sd > 0 else 0.0
        z = rng.standard_normal()
        log_t = p.cost_log_mean + latent.cost_scale + p.cost_log_sd * (p.rho * zq + math.sqrt(1 - p.rho ** 2) * z)
        return math.exp(log_t)

    def observed_metric(self, node_id: int) -> float:
        z = self.rng(node_id, "noise").standard_normal()
        value = self.latents[node_id].quality + self.params.noise_sd * z
        return -value if self.metric.lower_is_better else value

    def run(self, repo: SolutionRepo, limit: float, node_id: int) -> ExecutionOutcome:
        lid = self.latent_id(repo)
        latent = self.latents[lid]
        t = self.draw_time(lid, latent)
        if latent.buggy:
            # crashes surface partway through the run
            t *= 0.05 + 0.45 * self.rng(lid, "crash").random()
        if t >= limit:
            self.clock.charge(limit)
            self.exec_time += limit
            return ExecutionOutcome(TIMEOUT, f"[sim] node {lid} exceeded {limit:g}s\n", ExecutionCost(limit, limit))
        t = max(t, 1e-9)
        self.clock.charge(t)
        self.exec_time += t
        cost = ExecutionCost(t, limit)
        if latent.buggy:
            rng = self.rng(lid, "lesson")
            err = _VOCAB["error"][int(rng.integers(len(_VOCAB["error"])))]
            out = f"Traceback (most recent call last):\n  File \"model.py\", line 4\nRuntimeError: {err}\n"
            return ExecutionOutcome(FAILURE, out, cost, None, 1)
        metric = self.observed_metric(lid)
        return ExecutionOutcome(SUCCESS, f"training done\nFinal Validation Metric: {metric!r}\n", cost, metric, 0)


def sim_worker(params: LandscapeParams, metric: MetricSpec | None = None):
    """Factory for ``run_forest``: one simulator (generator, harness and clock) per tree."""
    def make(tree: int):
        sim = Simulator(params, metric, tree)
        return sim, sim, sim.clock
    return make
