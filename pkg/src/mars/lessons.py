"""Comparative reflective memory: solution and debug lessons.

The pool is append-only. Every accepted lesson is kept (and persisted when a
directory is given); only retrieval is windowed by ``recent_lessons``.
"""

from __future__ import annotations

import json
import logging
import re
import threading
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

log = logging.getLogger(__name__)

SOLUTION = "solution"
DEBUG = "debug"
CATEGORIES = (SOLUTION, DEBUG)

BODY_SECTIONS = {
    SOLUTION: ("causal_change", "impact_analysis", "generalized_rule"),
    DEBUG: ("efficacy", "failure_logic", "detection_guidelines"),
}

CITATION = re.compile(r"\bCite(?:\s+Lesson)?\s*[:#]?\s*(\d{5})(?!\d)", re.IGNORECASE)


@dataclass(frozen=True)
class Lesson:
    category: str
    title: str
    body: dict
    origin_node: int | None = None
    origin_branch: int | None = None
    origin_tree: int = 0
    id: str = ""
    created_seq: int = -1

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown lesson category {self.category!r}")
        missing = [s for s in BODY_SECTIONS[self.category] if not str(self.body.get(s, "")).strip()]
        if missing:
            raise ValueError(f"{self.category} lesson missing sections: {', '.join(missing)}")
        if not self.title.strip():
            raise ValueError("lesson title must be non-empty")

    def text(self) -> str:
        sections = "\n".join(f"{k}: {self.body[k]}" for k in BODY_SECTIONS[self.category])
        return f"{self.title}\n{sections}"

    def render(self) -> str:
        """Prompt form, carrying the id the model is asked to cite."""
        heading = f"Lesson {self.id}: {self.title}" if self.id else self.title
        pretty = {
            "causal_change": "Summary",
            "impact_analysis": "Empirical Findings",
            "generalized_rule": "Key Lesson",
            "efficacy": "Fix Efficacy",
            "failure_logic": "Explanation",
            "detection_guidelines": "Detection",
        }
        lines = [heading] + [f"- {pretty[k]}: {self.body[k]}" for k in BODY_SECTIONS[self.category]]
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Lesson":
        return cls(**d)


# reviewer(existing same-category lessons, candidate) -> True when candidate duplicates one of them
DedupReviewer = Callable[[Sequence[Lesson], Lesson], bool]


def _tokens(text: str) -> list[str]:
    return re.findall(r"[a-z0-9]+", text.lower())


def shingles(text: str, k: int = 3) -> frozenset:
    toks = _tokens(text)
    if len(toks) < k:
        return frozenset([tuple(toks)]) if toks else frozenset()
    return frozenset(tuple(toks[i:i + k]) for i in range(len(toks) - k + 1))


def jaccard(a: frozenset, b: frozenset) -> float:
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


class ShingleReviewer:
    """Deterministic dedup: 3-gram token shingles, Jaccard at or above threshold means duplicate."""

    def __init__(self, threshold: float = 0.8, k: int = 3):
        self.threshold = threshold
        self.k = k
        self._cache: dict[str, frozenset] = {}

    def _sh(self, lesson: Lesson) -> frozenset:
        text = lesson.text()
        sh = self._cache.get(text)
        if sh is None:
            sh = self._cache[text] = shingles(text, self.k)
        return sh

    def similarity(self, a: Lesson, b: Lesson) -> float:
        return jaccard(self._sh(a), self._sh(b))

    def __call__(self, existing: Sequence[Lesson], candidate: Lesson) -> bool:
        return any(self.similarity(candidate, e) >= self.threshold for e in existing)


def never_duplicate(existing: Sequence[Lesson], candidate: Lesson) -> bool:
    return False


@dataclass
class AddResult:
    accepted: bool
    lesson: Lesson | None = None
    error: str | None = None


class LessonPool:
    """Thread-safe lesson store shared by every search tree of a run.

    ``add`` reviews outside the lock against a snapshot and commits only if no
    same-category lesson arrived meanwhile; otherwise it re-reviews the new
    arrivals. Slow (model-backed) reviewers therefore never hold the lock.
    """

    def __init__(self, directory: str | Path | None = None):
        self._lock = threading.Lock()
        self._lessons: dict[str, Lesson] = {}
        self._by_cat: dict[str, list[Lesson]] = {c: [] for c in CATEGORIES}
        self._texts: set[tuple[str, str]] = set()
        self._seq = 0
        self.quarantine: list[tuple[Lesson, str]] = []
        self.directory = Path(directory) if directory is not None else None
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)

    def __len__(self):
        with self._lock:
            return len(self._lessons)

    def __contains__(self, lesson_id: str):
        with self._lock:
            return lesson_id in self._lessons

    def get(self, lesson_id: str) -> Lesson | None:
        with self._lock:
            return self._lessons.get(lesson_id)

    def all(self, category: str | None = None) -> list[Lesson]:
        with self._lock:
            if category is None:
                return sorted(self._lessons.values(), key=lambda l: l.created_seq)
            return list(self._by_cat[category])

    def count(self, category: str) -> int:
        with self._lock:
            return len(self._by_cat[category])

    def add(self, candidate: Lesson, reviewer: DedupReviewer) -> AddResult:
        # exact resubmissions are rejected whatever the reviewer says
        key = (candidate.category, candidate.text())
        seen = 0
        while True:
            with self._lock:
                if key in self._texts:
                    return AddResult(False)
                existing = self._by_cat[candidate.category]
                snapshot = existing[seen:]
                version = len(existing)
            try:
                duplicate = bool(reviewer(snapshot, candidate)) if snapshot else False
            except Exception as exc:  # reviewer crashes must not corrupt the pool
                log.warning("dedup reviewer failed, lesson quarantined: %s", exc)
                with self._lock:
                    self.quarantine.append((candidate, repr(exc)))
                return AddResult(False, None, repr(exc))
            if duplicate:
                return AddResult(False)
            with self._lock:
                existing = self._by_cat[candidate.category]
                if len(existing) != version:
                    seen = version
                    continue
                self._texts.add(key)
                self._seq += 1
                lesson = replace(candidate, id=f"{self._seq:05d}", created_seq=self._seq)
                self._lessons[lesson.id] = lesson
                existing.append(lesson)
                if self.directory is not None:
                    self._persist(lesson)
                return AddResult(True, lesson)

    def _persist(self, lesson: Lesson) -> None:
        doc = json.dumps(lesson.to_dict(), indent=2, sort_keys=True)
        (self.directory / f"{lesson.id}.json").write_text(doc + "\n", encoding="utf-8")
        with open(self.directory / "index.jsonl", "a", encoding="utf-8") as fh:
            fh.write(json.dumps({"id": lesson.id, "category": lesson.category, "title": lesson.title,
                                 "created_seq": lesson.created_seq}) + "\n")

    @classmethod
    def load(cls, directory: str | Path) -> "LessonPool":
        directory = Path(directory)
        pool = cls()
        index = directory / "index.jsonl"
        if index.exists():
            for line in index.read_text(encoding="utf-8").splitlines():
                entry = json.loads(line)
                lesson = Lesson.from_dict(json.loads((directory / f"{entry['id']}.json").read_text()))
                pool._lessons[lesson.id] = lesson
                pool._by_cat[lesson.category].append(lesson)
                pool._texts.add((lesson.category, lesson.text()))
                pool._seq = max(pool._seq, lesson.created_seq)
        pool.directory = directory
        return pool


def add_lesson(pool: LessonPool, candidate: Lesson, reviewer: DedupReviewer) -> bool:
    return pool.add(candidate, reviewer).accepted


def recent_lessons(pool: LessonPool, category: str, k: int) -> list[Lesson]:
    if k < 0:
        raise ValueError("k must be non-negative")
    if k == 0:
        return []
    return pool.all(category)[-k:]


def parse_citations(text: str) -> set[str]:
    return set(CITATION.findall(text or ""))


def render_lessons(lessons: Iterable[Lesson]) -> str:
    rendered = [l.render() for l in lessons]
    return "\n\n".join(rendered) if rendered else "(no lessons yet)"
