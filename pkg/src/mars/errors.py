"""Exception hierarchy shared across the package."""

from __future__ import annotations


class MarsError(Exception):
    pass


# reward
class InvalidMetric(MarsError, ValueError):
    pass


class EmptyHistory(MarsError, ValueError):
    pass


class InvalidCost(MarsError, ValueError):
    pass


# repo workspace
class RepoError(MarsError):
    pass


class SecurityViolation(RepoError, ValueError):
    pass


class MalformedDiff(RepoError, ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class EmptyDiff(RepoError, ValueError):
    pass


class SearchNotFound(RepoError):
    def __init__(self, file: str, hunk_index: int, reason: str = "search block not found"):
        super().__init__(f"hunk {hunk_index} ({file}): {reason}")
        self.file = file
        self.hunk_index = hunk_index


class AmbiguousSearch(RepoError):
    def __init__(self, file: str, hunk_index: int):
        super().__init__(f"hunk {hunk_index} ({file}): search block matches more than once")
        self.file = file
        self.hunk_index = hunk_index


class FileExists(RepoError):
    def __init__(self, file: str, hunk_index: int):
        super().__init__(f"hunk {hunk_index} ({file}): cannot create, file already exists")
        self.file = file
        self.hunk_index = hunk_index


class InvalidRepo(RepoError, ValueError):
    pass


class IoError(RepoError, OSError):
    pass


# drivers
class TemplateError(MarsError, KeyError):
    def __init__(self, placeholder: str):
        super().__init__(placeholder)
        self.placeholder = placeholder

    def __str__(self) -> str:
        return f"missing template binding: {self.placeholder}"


class DriverUnavailable(MarsError):
    pass


class DriverProtocolError(MarsError):
    pass


class ParseError(MarsError, ValueError):
    pass


class SchemaError(ParseError):
    def __init__(self, field: str, message: str = ""):
        super().__init__(message or f"missing or invalid field: {field}")
        self.field = field


class DraftFailed(MarsError):
    def __init__(self, stage: str, cause: BaseException | str):
        super().__init__(f"draft failed at stage {stage!r}: {cause}")
        self.stage = stage
        self.cause = cause


class ReviewFailed(MarsError):
    pass


# harness
class HarnessError(MarsError):
    pass


# config / logs
class ConfigError(MarsError):
    def __init__(self, problems: list[str]):
        super().__init__("invalid config:\n" + "\n".join(f"  - {p}" for p in problems))
        self.problems = problems


class TrajectoryError(MarsError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
