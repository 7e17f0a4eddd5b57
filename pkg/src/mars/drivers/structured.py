"""Pull structured values out of free-form model completions."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from ..errors import ParseError, SchemaError
from ..harness import ReviewRecord
from ..reward import MetricSpec

_FENCE_OPEN = re.compile(r"^\s*```+\s*([\w+-]*)\s*$")
_FENCE_CLOSE = re.compile(r"^\s*```+\s*$")


@dataclass(frozen=True)
class DedupVerdict:
    reasoning: str
    duplicate: bool


def fenced_blocks(text: str) -> list[tuple[str, str]]:
    """Return ``(language, content)`` for every fenced block, in order.

    Fences are recognised only as whole lines, so prose such as
    "wrapped in ```" does not open a block.
    """
    blocks = []
    lang, buf = None, []
    for line in text.split("\n"):
        if lang is None:
            m = _FENCE_OPEN.match(line)
            if m:
                lang, buf = m.group(1).lower(), []
        elif _FENCE_CLOSE.match(line):
            blocks.append((lang, "\n".join(buf)))
            lang = None
        else:
            buf.append(line)
    return blocks


def last_block(text: str, languages: tuple[str, ...] | None = None) -> str:
    blocks = fenced_blocks(text)
    if languages is not None:
        blocks = [b for b in blocks if b[0] in languages] or [b for b in blocks if b[0] == ""]
    if not blocks:
        raise ParseError("no fenced code block in completion")
    return blocks[-1][1]


def extract_code(text: str) -> str:
    code = last_block(text, ("python", "py"))
    return code if code.endswith("\n") else code + "\n"


def _repair_commas(doc: str) -> str:
    # Drop trailing and repeated commas outside string literals; the shipped
    # response examples contain both.
    out = []
    in_str = escape = False
    pending_comma = False
    for ch in doc:
        if in_str:
            out.append(ch)
            if escape:
                escape = False
            elif ch == "\\":
                escape = True
            elif ch == '"':
                in_str = False
            continue
        if ch == ",":
            pending_comma = True
            continue
        if ch.isspace():
            out.append(ch)
            continue
        if pending_comma and ch not in "}]":
            out.append(",")
        pending_comma = False
        if ch == '"':
            in_str = True
        out.append(ch)
    return "".join(out)


def loads_lenient(doc: str):
    try:
        return json.loads(doc)
    except json.JSONDecodeError:
        pass
    repaired = _repair_commas(doc)
    repaired = re.sub(r"\bTrue\b", "true", repaired)
    repaired = re.sub(r"\bFalse\b", "false", repaired)
    repaired = re.sub(r"\bNone\b", "null", repaired)
    try:
        return json.loads(repaired)
    except json.JSONDecodeError as exc:
        raise ParseError(f"fenced block is not valid JSON: {exc}") from exc


def _field(doc: dict, name: str, kinds, allow_none: bool = False):
    if name not in doc:
        raise SchemaError(name)
    value = doc[name]
    if value is None and allow_none:
        return None
    if isinstance(value, bool) and bool not in kinds:
        raise SchemaError(name, f"field {name} has wrong type")
    if not isinstance(value, kinds):
        raise SchemaError(name, f"field {name} has wrong type")
    return value


def _metric_spec(doc) -> MetricSpec:
    if not isinstance(doc, dict):
        raise SchemaError("metric_name", "expected a JSON object")
    name = _field(doc, "metric_name", (str,))
    lower = _field(doc, "lower_is_better", (bool,))
    if not name:
        raise SchemaError("metric_name")
    return MetricSpec(name, lower)


def _review(doc) -> ReviewRecord:
    if not isinstance(doc, dict):
        raise SchemaError("summary", "expected a JSON object")
    summary = _field(doc, "summary", (str,))
    metric = _field(doc, "metric", (int, float), allow_none=True)
    valid = _field(doc, "valid_metric", (bool,))
    return ReviewRecord(summary, None if metric is None else float(metric), valid)


def _dedup(doc) -> DedupVerdict:
    if not isinstance(doc, dict):
        raise SchemaError("duplicate", "expected a JSON object")
    return DedupVerdict(_field(doc, "reasoning", (str,)), _field(doc, "duplicate", (bool,)))


def _module_map(doc) -> dict[str, str]:
    if not isinstance(doc, dict):
        raise SchemaError("main", "module map must be a JSON object")
    out = {}
    for name, desc in doc.items():
        if not isinstance(desc, str):
            raise SchemaError(name, f"description of module {name} must be a string")
        out[name.removesuffix(".py")] = desc
    if "main" not in out:
        raise SchemaError("main")
    return out


def _validation_verdict(doc) -> dict:
    if not isinstance(doc, dict):
        raise SchemaError("success", "expected a JSON object")
    return {"analysis": _field(doc, "analysis", (str,)), "success": _field(doc, "success", (bool,))}


def _architectures(doc) -> list[dict]:
    if not isinstance(doc, list) or not doc:
        raise SchemaError("description", "expected a non-empty JSON list")
    for item in doc:
        if not isinstance(item, dict):
            raise SchemaError("description", "each candidate must be an object")
        _field(item, "reasoning", (str,))
        _field(item, "description", (str,))
    return doc


SHAPES = {
    "metric-spec": _metric_spec,
    "review-record": _review,
    "dedup-verdict": _dedup,
    "module-map": _module_map,
    "validation-verdict": _validation_verdict,
    "architecture-candidates": _architectures,
}


def extract_structured(completion: str, expected: str):
    if expected not in SHAPES:
        raise ValueError(f"unknown shape {expected!r}")
    doc = loads_lenient(last_block(completion))
    return SHAPES[expected](doc)


_SECTION = re.compile(r"^\s*(?:[#>*\-\s]*)\**\s*([A-Za-z][A-Za-z ]{1,40}?)\s*\**\s*:\s*\**\s*(.*)$")


def parse_sections(text: str, names: tuple[str, ...]) -> dict[str, str]:
    """Split "Title: ..." style free text into the requested sections.

    Headings may carry markdown decoration (``**Title:**``, ``- Title:``,
    ``### Title:``). A section runs until the next recognised heading.
    """
    wanted = {n.lower(): n for n in names}
    found: dict[str, list[str]] = {}
    current = None
    for line in text.split("\n"):
        m = _SECTION.match(line)
        key = m.group(1).strip().lower() if m else None
        if key in wanted:
            current = wanted[key]
            found[current] = [m.group(2).strip().strip("*").strip()]
        elif current is not None:
            found[current].append(line)
    return {k: "\n".join(v).strip() for k, v in found.items() if "\n".join(v).strip()}
