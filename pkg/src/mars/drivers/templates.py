"""Prompt templates shipped as text assets, one file per prompt.

Bodies use ``str.format`` conventions: ``{name}`` is a placeholder and
``{{``/``}}`` are literal braces.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Mapping

from ..errors import TemplateError

ASSET_PACKAGE = "mars.prompts"

# Prompt name -> asset file stem. Names follow the prompt headings.
TEMPLATES = {
    "Metric Parsing Instruction": "metric_parsing_instruction",
    "Metadata Generation Instruction": "metadata_generation_instruction",
    "Validation Dataset Verification Instruction": "validation_dataset_verification_instruction",
    "Metadata Documentation Instruction": "metadata_documentation_instruction",
    "Exploratory Data Analysis Instruction": "exploratory_data_analysis_instruction",
    "Model Architecture Search Instruction": "model_architecture_search_instruction",
    "Initial Idea Proposal Instruction": "initial_idea_proposal_instruction",
    "Idea Improvement Instruction": "idea_improvement_instruction",
    "Modular Decomposition Instruction": "modular_decomposition_instruction",
    "Module Implementation Instruction": "module_implementation_instruction",
    "Module Testing Instruction": "module_testing_instruction",
    "Solution Drafting Instruction": "solution_drafting_instruction",
    "Solution Improvement Instruction": "solution_improvement_instruction",
    "Bug Analysis Instruction": "bug_analysis_instruction",
    "Debugging Instruction": "debugging_instruction",
    "Debugging Lesson Distillation Instruction": "debugging_lesson_distillation_instruction",
    "Execution Result Review Instruction": "execution_result_review_instruction",
    "Solution Lesson Distillation Instruction": "solution_lesson_distillation_instruction",
    "Lesson Deduplication Instruction": "lesson_deduplication_instruction",
}


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    body: str

    @property
    def required(self) -> frozenset:
        return frozenset(f for _, f, _, _ in string.Formatter().parse(self.body) if f is not None)


def render_template(tpl: PromptTemplate, bindings: Mapping[str, object]) -> str:
    out = []
    for literal, field, _spec, _conv in string.Formatter().parse(tpl.body):
        out.append(literal)
        if field is None:
            continue
        if field not in bindings:
            raise TemplateError(field)
        out.append(str(bindings[field]))
    return "".join(out)


@lru_cache(maxsize=None)
def _read_asset(stem: str, directory: str | None) -> str:
    if directory is not None:
        return (Path(directory) / f"{stem}.txt").read_text(encoding="utf-8")
    return resources.files(ASSET_PACKAGE).joinpath(f"{stem}.txt").read_text(encoding="utf-8")


def load_template(name: str, directory: str | None = None) -> PromptTemplate:
    stem = TEMPLATES.get(name, name)
    return PromptTemplate(name, _read_asset(stem, None if directory is None else str(directory)))


def all_templates(directory: str | None = None) -> list[PromptTemplate]:
    return [load_template(n, directory) for n in TEMPLATES]
