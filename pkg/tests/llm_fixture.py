"""Recorded request/response pairs for one draft -> review -> lesson -> improve cycle."""

from __future__ import annotations

FENCE = "```"

TASK = "Predict the constant. Submissions are scored by accuracy on a hold-out set (higher is better)."


def pair(contains: str, content: str) -> dict:
    return {"request": {"contains": contains}, "response": {"status": 200, "content": content}}


def json_block(body: str) -> str:
    return f"{FENCE}json\n{body}\n{FENCE}"


def py_block(body: str) -> str:
    return f"Here is the code.\n{FENCE}python\n{body}{FENCE}\n"


LESSON_1 = """Title: Constant baseline establishes the floor
Summary: A single-module constant predictor wired into runfile.py.
Empirical Findings: The run finished quickly and reported 0.5 on the hold-out set.
Key Lesson: Start from the cheapest baseline that exercises the full pipeline before adding capacity."""

LESSON_2 = """**Title:** Calibrating the constant toward the label mean
**Summary:** Raised the predicted constant from 0.5 to 0.75.
**Empirical Findings:** Accuracy rose from 0.5 to 0.75 with no change in runtime.
**Key Lesson:** When a baseline underfits, move its single parameter toward the label statistics first."""

IMPROVE = """Following the earlier finding, raise the constant. Cite 00001

<<<FILE: scorer.py>>>
<<<SEARCH>>>
    return 0.5
<<<REPLACE>>>
    return 0.75
<<<END>>>
"""


def cycle_pairs() -> list[dict]:
    return [
        pair("identify the primary evaluation metric",
             json_block('{"metric_name": "accuracy", "lower_is_better": false}')),
        pair("baseline approach", "Predict a constant score of 0.5 from a tiny scoring module."),
        pair("modular repository structure",
             json_block('{\n  "scorer.py": "exposes score() returning the constant prediction",\n'
                        '  "main": "runfile.py prints the validation metric"\n}')),
        pair("implement the `scorer.py` module", py_block("def score():\n    return 0.5\n")),
        pair("orchestration script `runfile.py`",
             py_block('from scorer import score\n\nprint(f"Final Validation Metric: {score()}")\n')),
        pair("evaluate the output of the code execution",
             json_block('{"summary": "Constant baseline ran cleanly.", "metric": 0.5, "valid_metric": true}')),
        pair("Current Best Solution ====\n(missing)", LESSON_1),
        pair("Lesson 00001: Constant baseline establishes the floor", IMPROVE),
        pair("evaluate the output of the code execution",
             json_block('{"summary": "Higher constant.", "metric": 0.75, "valid_metric": true}')),
        pair("distill a high-value", LESSON_2),
        pair("semantically equivalent",
             json_block('{"reasoning": "Different parameter and finding.", "duplicate": false}')),
    ]
