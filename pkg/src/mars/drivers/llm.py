"""Model-backed generator: prompt assembly, response parsing and the draft pipeline."""

from __future__ import annotations

import logging
import tempfile
from typing import Callable, Sequence

from ..errors import DraftFailed, MarsError, SchemaError
from ..harness import ReviewRecord, execute_solution
from ..lessons import DEBUG, SOLUTION, Lesson, parse_citations, render_lessons
from ..repo import DiffSet, SolutionRepo, apply_diff, creation_diff, parse_diff, render_diff, render_files
from ..reward import MetricSpec
from .contract import DraftResult, EditResult, SolutionView, TaskContext
from .structured import extract_code, extract_structured, parse_sections
from .templates import load_template, render_template

log = logging.getLogger(__name__)

MAIN_FILE = "runfile.py"

DIFF_FORMAT = """==== Edit Format ====
Return your changes as search/replace blocks. Each block names one file and
must look exactly like this, with every marker alone on its own line:

<<<FILE: path/to/file.py>>>
<<<SEARCH>>>
lines copied exactly from the current file
<<<REPLACE>>>
the new lines
<<<END>>>

The SEARCH text must match the current file exactly once. Use an empty SEARCH
section to create a new file; replace a file's whole content with nothing to
delete it. Use as many blocks as needed; they are applied in order, and if any
block fails none of them is applied. Text outside the blocks is read as your
explanation.
"""


def _clip_ideas(ideas: Sequence[str], budget: int) -> str:
    """Newest ideas first, as many as fit in ``budget`` characters."""
    kept, used = [], 0
    for idea in ideas:
        if used + len(idea) > budget and kept:
            break
        kept.append(idea)
        used += len(idea)
    return "\n\n---\n\n".join(kept) if kept else "(none yet)"


def _view_text(view: SolutionView | None) -> str:
    if view is None or view.repo is None:
        return "(missing)"
    parts = [view.repo.render()]
    if view.exec_time is not None:
        parts.append(f"Execution time: {view.exec_time:.1f} seconds")
    parts.append(f"Validation metric: {view.metric if view.valid else 'invalid'}")
    if view.summary:
        parts.append(f"Execution summary:\n{view.summary}")
    return "\n\n".join(parts)


def _explanation(completion: str) -> str:
    head = completion.split("<<<FILE:", 1)[0]
    return head.strip()[:4000]


class LLMGenerator:
    """Implements the generator contract on top of any ``complete(prompt, purpose)`` client."""

    def __init__(
        self,
        client,
        *,
        prompt_dir: str | None = None,
        submission_cond: str = "",
        idea_budget: int = 8000,
        test_modules: bool = False,
        module_debug_attempts: int = 10,
        module_test_limit: float = 600.0,
        metric: MetricSpec | None = None,
        on_stage: Callable[[str], None] | None = None,
    ):
        self.client = client
        self.prompt_dir = prompt_dir
        self.submission_cond = submission_cond
        self.idea_budget = idea_budget
        self.test_modules = test_modules
        self.module_debug_attempts = module_debug_attempts
        self.module_test_limit = module_test_limit
        self.metric = metric
        self.on_stage = on_stage

    # -- plumbing ------------------------------------------------------------

    def prompt(self, name: str, task: TaskContext | None, **bindings) -> str:
        body = render_template(load_template(name, self.prompt_dir), bindings)
        if task is None:
            return body
        pre = f"==== Task Description ====\n{task.description.strip()}\n\n"
        if task.context.strip():
            pre += f"==== Task Context ====\n{task.context.strip()}\n\n"
        return pre + body

    def ask(self, purpose: str, prompt: str) -> str:
        if self.on_stage is not None:
            self.on_stage(purpose)
        return self.client.complete(prompt, purpose=purpose)

    # -- contract ------------------------------------------------------------

    def parse_metric_spec(self, task: TaskContext) -> MetricSpec:
        if self.metric is not None:
            return self.metric
        out = self.ask("metric", self.prompt("Metric Parsing Instruction", task))
        return extract_structured(out, "metric-spec")

    def draft(self, *, node_id: int, task: TaskContext, lessons: Sequence[Lesson],
              previous_ideas: Sequence[str]) -> DraftResult:
        files, idea, citations = draft_pipeline(self, task, lessons, previous_ideas)
        return DraftResult(idea, creation_diff(files), citations, MAIN_FILE)

    def improve(self, *, node_id: int, task: TaskContext, repo: SolutionRepo, summary: str,
                lessons: Sequence[Lesson]) -> EditResult:
        previous = repo.render() + (f"\n\nExecution summary:\n{summary}" if summary else "")
        prompt = self.prompt("Solution Improvement Instruction", task, lessons=render_lessons(lessons),
                             previous_solution=previous, submission_cond=self.submission_cond)
        out = self.ask("improve", prompt + "\n\n" + DIFF_FORMAT)
        return EditResult(parse_diff(out), parse_citations(out), _explanation(out))

    def debug(self, *, node_id: int, task: TaskContext, repo: SolutionRepo, output: str,
              lessons: Sequence[Lesson]) -> EditResult:
        rendered = render_lessons(lessons)
        analysis = self.ask("bug-analysis", self.prompt(
            "Bug Analysis Instruction", task, lessons=rendered, files=repo.render(), exec_result=output))
        out = self.ask("debug", self.prompt(
            "Debugging Instruction", task, lessons=rendered, files=repo.render(), exec_result=output,
            error_analysis=analysis) + "\n\n" + DIFF_FORMAT)
        return EditResult(parse_diff(out), parse_citations(analysis) | parse_citations(out), analysis.strip())

    def review_execution(self, *, node_id: int, task: TaskContext, repo: SolutionRepo,
                         output: str) -> ReviewRecord:
        library = render_files({k: v for k, v in repo.modules.items() if k != repo.main})
        out = self.ask("review", self.prompt(
            "Execution Result Review Instruction", task, library_files=library,
            code=repo.modules[repo.main], term_out=output))
        return extract_structured(out, "review-record")

    def distill_solution_lesson(self, *, node_id: int, best: SolutionView | None, new: SolutionView) -> Lesson:
        out = self.ask("solution-lesson", self.prompt(
            "Solution Lesson Distillation Instruction", None,
            best_solution=_view_text(best), new_solution=_view_text(new)))
        sec = parse_sections(out, ("Title", "Summary", "Empirical Findings", "Key Lesson"))
        for name in ("Title", "Summary", "Empirical Findings", "Key Lesson"):
            if name not in sec:
                raise SchemaError(name, f"solution lesson is missing the {name!r} section")
        return Lesson(SOLUTION, sec["Title"], {
            "causal_change": sec["Summary"],
            "impact_analysis": sec["Empirical Findings"],
            "generalized_rule": sec["Key Lesson"],
        })

    def distill_debug_lesson(self, *, node_id: int, before: SolutionView, diff: DiffSet,
                             after: SolutionView) -> Lesson:
        out = self.ask("debug-lesson", self.prompt(
            "Debugging Lesson Distillation Instruction", None,
            source_files=before.repo.render() if before.repo is not None else "(missing)",
            source_exec_result=before.output, source_error_analysis=after.analysis or "(none)",
            diff=render_diff(diff) if diff is not None else "(none)", final_exec_result=after.output))
        sec = parse_sections(out, ("Title", "Explanation", "Detection"))
        for name in ("Title", "Explanation", "Detection"):
            if name not in sec:
                raise SchemaError(name, f"debug lesson is missing the {name!r} section")
        efficacy = ("The fix resolved the failure; the run completed with a valid metric." if after.valid
                    else "The fix did not resolve the failure.")
        return Lesson(DEBUG, sec["Title"], {
            "efficacy": efficacy,
            "failure_logic": sec["Explanation"],
            "detection_guidelines": sec["Detection"],
        })

    def review_duplicate(self, existing: Sequence[Lesson], candidate: Lesson) -> bool:
        out = self.ask("dedup", self.prompt(
            "Lesson Deduplication Instruction", None,
            existing_lessons=render_lessons(existing), new_lesson=candidate.render()))
        return extract_structured(out, "dedup-verdict").duplicate


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except MarsError as exc:
        raise DraftFailed(name, exc) from exc


def draft_pipeline(gen: LLMGenerator, task: TaskContext, lessons: Sequence[Lesson],
                   previous_ideas: Sequence[str]) -> tuple[dict[str, str], str, set[str]]:
    """Design, decompose, implement. Returns ``(files, idea, citations)``.

    With an empty lesson pool the idea comes from the lightweight-baseline
    prompt; afterwards from the lesson-informed improvement prompt.
    """
    ideas = _clip_ideas(previous_ideas, gen.idea_budget)
    if lessons:
        prompt = gen.prompt("Idea Improvement Instruction", task, lessons=render_lessons(lessons),
                            previous_ideas=ideas)
    else:
        prompt = gen.prompt("Initial Idea Proposal Instruction", task,
                            model_arch_desc=task.model_candidates or "(none provided)", previous_ideas=ideas)
    idea = _stage("idea", gen.ask, "idea", prompt).strip()
    if not idea:
        raise DraftFailed("idea", "empty idea")
    citations = parse_citations(idea)

    out = _stage("decompose", gen.ask, "decompose", gen.prompt("Modular Decomposition Instruction", task, idea=idea))
    modules = _stage("decompose", extract_structured, out, "module-map")

    files: dict[str, str] = {}
    for name, description in modules.items():
        if name == "main":
            continue
        library = render_files(files)
        prompt = gen.prompt("Module Implementation Instruction", task, idea=idea, library_files=library,
                            file_name=f"{name}.py", file_description=description, dir_name=name)
        files[f"{name}.py"] = _stage(f"implement:{name}", lambda: extract_code(gen.ask(f"implement:{name}", prompt)))
        if gen.test_modules:
            files = _stage(f"test:{name}", _test_module, gen, task, files)

    library = render_files(files)
    prompt = gen.prompt("Solution Drafting Instruction", task, idea=idea, library_files=library,
                        file_description=modules["main"], submission_cond=gen.submission_cond)
    files[MAIN_FILE] = _stage("assemble", lambda: extract_code(gen.ask("assemble", prompt)))
    return files, idea, citations


def _test_module(gen: LLMGenerator, task: TaskContext, files: dict[str, str]) -> dict[str, str]:
    """Generate a usage demo for the library so far, run it, and repair the library until it passes."""
    library = render_files(files)
    test_code = extract_code(gen.ask("module-test", gen.prompt("Module Testing Instruction", task,
                                                               library_files=library)))
    for attempt in range(gen.module_debug_attempts + 1):
        repo = SolutionRepo({**files, "module_test.py": test_code}, "module_test.py")
        with tempfile.TemporaryDirectory() as tmp:
            outcome = execute_solution(repo, gen.module_test_limit, tmp)
        if outcome.ok:
            return files
        if attempt == gen.module_debug_attempts:
            break
        analysis = gen.ask("module-bug-analysis", gen.prompt(
            "Bug Analysis Instruction", task, lessons="(none)", files=repo.render(),
            exec_result=outcome.captured_output))
        out = gen.ask("module-debug", gen.prompt(
            "Debugging Instruction", task, lessons="(none)", files=repo.render(),
            exec_result=outcome.captured_output, error_analysis=analysis) + "\n\n" + DIFF_FORMAT)
        try:
            fixed = apply_diff(repo, parse_diff(out))
        except MarsError as exc:
            log.info("module repair attempt %d unusable: %s", attempt + 1, exc)
            continue
        test_code = fixed.modules["module_test.py"]
        files = {k: v for k, v in fixed.modules.items() if k != "module_test.py"}
    raise DraftFailed("module-test", "module tests still failing after repair attempts")
