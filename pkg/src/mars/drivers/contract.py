"""The boundary between the search engine and whatever writes solutions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence, runtime_checkable

from ..harness import ExecutionOutcome, ReviewRecord
from ..lessons import Lesson
from ..repo import DiffSet, SolutionRepo
from ..reward import MetricSpec


@dataclass(frozen=True)
class TaskContext:
    description: str
    # Prepared background (metadata docs, EDA report, model candidates) as prompt text.
    context: str = ""
    model_candidates: str = ""


@dataclass
class DraftResult:
    idea: str
    diff: DiffSet
    citations: set[str] = field(default_factory=set)
    main: str = "runfile.py"


@dataclass
class EditResult:
    diff: DiffSet
    citations: set[str] = field(default_factory=set)
    analysis: str = ""


@dataclass(frozen=True)
class SolutionView:
    """What lesson distillation sees of one executed node."""

    node_id: int
    repo: SolutionRepo | None
    metric: float | None
    exec_time: float | None
    summary: str = ""
    output: str = ""
    analysis: str = ""
    valid: bool = False


@runtime_checkable
class GeneratorContract(Protocol):
    def parse_metric_spec(self, task: TaskContext) -> MetricSpec: ...

    def draft(self, *, node_id: int, task: TaskContext, lessons: Sequence[Lesson],
              previous_ideas: Sequence[str]) -> DraftResult: ...

    def improve(self, *, node_id: int, task: TaskContext, repo: SolutionRepo, summary: str,
                lessons: Sequence[Lesson]) -> EditResult: ...

    def debug(self, *, node_id: int, task: TaskContext, repo: SolutionRepo, output: str,
              lessons: Sequence[Lesson]) -> EditResult: ...

    def distill_solution_lesson(self, *, node_id: int, best: SolutionView | None,
                                new: SolutionView) -> Lesson: ...

    def distill_debug_lesson(self, *, node_id: int, before: SolutionView, diff: DiffSet,
                             after: SolutionView) -> Lesson: ...

    def review_duplicate(self, existing: Sequence[Lesson], candidate: Lesson) -> bool: ...

    def review_execution(self, *, node_id: int, task: TaskContext, repo: SolutionRepo,
                         output: str) -> ReviewRecord: ...


@runtime_checkable
class ExecHarness(Protocol):
    def run(self, repo: SolutionRepo, limit: float, node_id: int) -> ExecutionOutcome: ...

