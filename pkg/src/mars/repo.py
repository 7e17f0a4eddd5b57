"""Modular solution repositories and the atomic multi-file search/replace format.

Wire format, one hunk per block, every sentinel alone on its line::

    <<<FILE: path/to/module.py>>>
    <<<SEARCH>>>
    exact text to find (empty to create the file)
    <<<REPLACE>>>
    replacement text
    <<<END>>>

Block contents are taken verbatim, trailing newlines included. Anything
outside a block (prose, code fences) is ignored.
"""

from __future__ import annotations

import os
import posixpath
import re
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping

from .errors import (
    AmbiguousSearch,
    EmptyDiff,
    FileExists,
    InvalidRepo,
    IoError,
    MalformedDiff,
    SearchNotFound,
    SecurityViolation,
)

FILE_SENTINEL = re.compile(r"^<<<FILE:\s*(.+?)\s*>>>$")
SEARCH_SENTINEL = "<<<SEARCH>>>"
REPLACE_SENTINEL = "<<<REPLACE>>>"
END_SENTINEL = "<<<END>>>"


def normalize_path(path: str) -> str:
    if not path or "\\" in path or "\x00" in path:
        raise SecurityViolation(f"invalid path: {path!r}")
    if path.startswith("/") or re.match(r"^[A-Za-z]:", path):
        raise SecurityViolation(f"absolute path not allowed: {path!r}")
    if ".." in path.split("/"):
        raise SecurityViolation(f"parent traversal not allowed: {path!r}")
    norm = posixpath.normpath(path)
    if norm in (".", "") or norm.startswith("../"):
        raise SecurityViolation(f"invalid path: {path!r}")
    return norm


@dataclass(frozen=True)
class SolutionRepo:
    """An immutable snapshot: module files plus the orchestration entry point."""

    modules: Mapping[str, str]
    main: str = "runfile.py"

    def __post_init__(self):
        files = {normalize_path(p): text for p, text in self.modules.items()}
        main = normalize_path(self.main)
        if main not in files:
            raise InvalidRepo(f"main file {main!r} is not part of the repository")
        object.__setattr__(self, "modules", MappingProxyType(files))
        object.__setattr__(self, "main", main)

    def __eq__(self, other):
        if not isinstance(other, SolutionRepo):
            return NotImplemented
        return self.main == other.main and list(self.modules.items()) == list(other.modules.items())

    def __hash__(self):
        return hash((self.main, tuple(self.modules.items())))

    def to_dict(self) -> dict:
        return {"main": self.main, "modules": dict(self.modules)}

    @classmethod
    def from_dict(cls, data: Mapping) -> "SolutionRepo":
        return cls(dict(data["modules"]), data["main"])

    def render(self) -> str:
        """Concatenate files for prompts, main file last."""
        return render_files(self.modules, self.main)


def render_files(files: Mapping[str, str], main: str | None = None) -> str:
    order = [p for p in files if p != main] + ([main] if main in files else [])
    if not order:
        return "(none)"
    return "\n\n".join(f"--- {path} ---\n```python\n{files[path]}\n```" for path in order)


@dataclass(frozen=True)
class DiffHunk:
    file: str
    search: str
    replace: str

    @property
    def is_creation(self) -> bool:
        return self.search == ""


@dataclass(frozen=True)
class DiffSet:
    hunks: tuple[DiffHunk, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "hunks", tuple(self.hunks))

    def __len__(self):
        return len(self.hunks)

    def __iter__(self):
        return iter(self.hunks)

    def files(self) -> list[str]:
        return list(dict.fromkeys(h.file for h in self.hunks))


def _lines(text: str):
    # Split on "\n" only; str.splitlines would also break on \r, \f and friends.
    start = 0
    while start < len(text):
        end = text.find("\n", start)
        if end < 0:
            yield text[start:]
            return
        yield text[start:end + 1]
        start = end + 1


def parse_diff(text: str) -> DiffSet:
    hunks: list[DiffHunk] = []
    state = "outside"
    path = ""
    search: list[str] = []
    replace: list[str] = []
    block_start = 0
    offset = 0
    for line in _lines(text):
        stripped = line.strip()
        here = offset
        offset += len(line.encode("utf-8"))
        file_match = FILE_SENTINEL.match(stripped)
        is_sentinel = bool(file_match) or stripped in (SEARCH_SENTINEL, REPLACE_SENTINEL, END_SENTINEL)

        if state == "outside":
            if file_match:
                path, state, block_start = file_match.group(1), "file", here
                search, replace = [], []
            elif is_sentinel:
                raise MalformedDiff(f"{stripped} outside of a FILE block", here)
        elif state == "file":
            if stripped == SEARCH_SENTINEL:
                state = "search"
            else:
                raise MalformedDiff(f"expected {SEARCH_SENTINEL} after FILE sentinel", here)
        elif state == "search":
            if stripped == REPLACE_SENTINEL:
                state = "replace"
            elif is_sentinel:
                raise MalformedDiff(f"unexpected {stripped} inside SEARCH block", here)
            else:
                search.append(line)
        elif state == "replace":
            if stripped == END_SENTINEL:
                hunks.append(DiffHunk(normalize_path(path), "".join(search), "".join(replace)))
                state = "outside"
            elif is_sentinel:
                raise MalformedDiff(f"unexpected {stripped} inside REPLACE block", here)
            else:
                replace.append(line)
    if state != "outside":
        raise MalformedDiff(f"unterminated block for {path!r}, missing {END_SENTINEL}", block_start)
    if not hunks:
        raise EmptyDiff("no search/replace hunks found")
    return DiffSet(tuple(hunks))


def render_diff(diff: DiffSet) -> str:
    out = []
    for i, h in enumerate(diff.hunks):
        for name, block in (("search", h.search), ("replace", h.replace)):
            if block and not block.endswith("\n"):
                raise ValueError(f"hunk {i}: {name} block must end with a newline to be rendered")
        out.append(
            f"<<<FILE: {h.file}>>>\n{SEARCH_SENTINEL}\n{h.search}{REPLACE_SENTINEL}\n{h.replace}{END_SENTINEL}\n"
        )
    return "".join(out)


def _apply_hunks(files: dict[str, str], hunks: Iterable[DiffHunk]) -> dict[str, str]:
    files = dict(files)
    for i, hunk in enumerate(hunks):
        path = normalize_path(hunk.file)
        if hunk.is_creation:
            if path in files:
                raise FileExists(path, i)
            files[path] = hunk.replace
            continue
        if path not in files:
            raise SearchNotFound(path, i, "file does not exist")
        content = files[path]
        first = content.find(hunk.search)
        if first < 0:
            raise SearchNotFound(path, i)
        if content.find(hunk.search, first + 1) >= 0:
            raise AmbiguousSearch(path, i)
        content = content[:first] + hunk.replace + content[first + len(hunk.search):]
        if content:
            files[path] = content
        else:
            del files[path]
    return files


def apply_diff(repo: SolutionRepo, diff: DiffSet) -> SolutionRepo:
    """Apply every hunk in order or none of them; ``repo`` is never touched."""
    files = _apply_hunks(dict(repo.modules), diff.hunks)
    if repo.main not in files:
        raise InvalidRepo(f"diff removes the main file {repo.main!r}")
    return SolutionRepo(files, repo.main)


def repo_from_creations(diff: DiffSet, main: str) -> SolutionRepo:
    """Build a fresh repository from a draft's file-creation hunks."""
    for i, hunk in enumerate(diff.hunks):
        if not hunk.is_creation:
            raise SearchNotFound(hunk.file, i, "drafts may only create files")
    return SolutionRepo(_apply_hunks({}, diff.hunks), main)


def creation_diff(files: Mapping[str, str]) -> DiffSet:
    return DiffSet(tuple(DiffHunk(p, "", text) for p, text in files.items()))


def materialize(repo: SolutionRepo, directory: str | os.PathLike) -> None:
    root = Path(directory)
    try:
        root.mkdir(parents=True, exist_ok=True)
        base = root.resolve()
        for rel, text in repo.modules.items():
            target = (root / normalize_path(rel)).resolve()
            if base != target and base not in target.parents:
                raise SecurityViolation(f"{rel!r} escapes {base}")
            target.parent.mkdir(parents=True, exist_ok=True)
            with open(target, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
    except SecurityViolation:
        raise
    except OSError as exc:
        raise IoError(str(exc)) from exc


def read_back(directory: str | os.PathLike, main: str, paths: Iterable[str] | None = None) -> SolutionRepo:
    root = Path(directory)
    if paths is None:
        paths = sorted(p.relative_to(root).as_posix() for p in root.rglob("*") if p.is_file())
    files = {}
    for rel in paths:
        with open(root / rel, encoding="utf-8", newline="") as fh:
            files[rel] = fh.read()
    return SolutionRepo(files, main)


def count_lines(text: str) -> int:
    if not text:
        return 0
    return text.count("\n") + (0 if text.endswith("\n") else 1)


def repo_stats(repo: SolutionRepo) -> dict:
    return {
        "lines_of_code": sum(count_lines(t) for t in repo.modules.values()),
        "file_count": len(repo.modules),
    }
