"""Append-only JSON Lines event log shared by every tree of a run.

Each line is one object with ``seq``, ``kind``, ``tree``, ``node``, ``time``
(budget clock of that tree) and kind-specific payload fields.
"""

from __future__ import annotations

import json
import threading
import time
from pathlib import Path
from typing import Iterable

from .errors import TrajectoryError

# kind -> payload fields that must be present
SCHEMA = {
    "run_started": ("config",),
    "node_created": ("parent", "action", "branch", "debug_depth", "citations"),
    "executed": ("exit_status", "t", "L"),
    "reviewed": ("status", "metric", "oriented", "summary"),
    "lesson_added": ("lesson", "category", "origin_branch"),
    "lesson_rejected": ("category", "reason"),
    "lesson_quarantined": ("category", "reason"),
    "lesson_cited": ("lesson", "category", "origin_branch", "origin_tree", "branch"),
    "citation_miss": ("lesson",),
    "backprop": ("reward", "path"),
    "best_updated": ("metric", "oriented"),
    "budget_exhausted": ("elapsed",),
    "search_finished": ("best", "nodes", "elapsed"),
    "model_call": ("purpose", "status", "attempts"),
    "run_finished": ("status",),
}
COMMON = ("seq", "kind", "tree", "node", "time")


class TrajectoryLog:
    """Thread-safe event sink. Keeps events in memory and optionally mirrors them to a file."""

    def __init__(self, path: str | Path | None = None, wall_timestamps: bool = False):
        self.path = Path(path) if path is not None else None
        self.wall_timestamps = wall_timestamps
        self.events: list[dict] = []
        self._lock = threading.Lock()
        self._fh = None
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "w", encoding="utf-8")

    def emit(self, kind: str, tree: int = 0, node: int | None = None, time_used: float = 0.0, **payload) -> dict:
        if kind not in SCHEMA:
            raise ValueError(f"unknown event kind {kind!r}")
        with self._lock:
            event = {"seq": len(self.events), "kind": kind, "tree": tree, "node": node, "time": time_used, **payload}
            if self.wall_timestamps:
                event["wall"] = time.time()
            self.events.append(event)
            if self._fh is not None:
                self._fh.write(json.dumps(event, sort_keys=True, allow_nan=False) + "\n")
                self._fh.flush()
        return event

    def close(self):
        with self._lock:
            if self._fh is not None:
                self._fh.close()
                self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def validate_event(event, lineno: int, expected_seq: int) -> None:
    if not isinstance(event, dict):
        raise TrajectoryError(lineno, "event is not a JSON object")
    for key in COMMON:
        if key not in event:
            raise TrajectoryError(lineno, f"missing field {key!r}")
    kind = event["kind"]
    if kind not in SCHEMA:
        raise TrajectoryError(lineno, f"unknown event kind {kind!r}")
    for key in SCHEMA[kind]:
        if key not in event:
            raise TrajectoryError(lineno, f"{kind} event missing field {key!r}")
    if event["seq"] != expected_seq:
        raise TrajectoryError(lineno, f"sequence gap: expected seq {expected_seq}, found {event['seq']}")


def read_trajectory(path: str | Path, require_complete: bool = True) -> list[dict]:
    """Parse and schema-check a log; raises TrajectoryError naming the offending line."""
    raw = Path(path).read_text(encoding="utf-8")
    lines = raw.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    elif lines:
        raise TrajectoryError(len(lines), "log truncated mid-line")
    return parse_events(lines, require_complete)


def parse_events(lines: Iterable[str], require_complete: bool = True) -> list[dict]:
    events = []
    lineno = 0
    for lineno, line in enumerate(lines, start=1):
        try:
            event = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TrajectoryError(lineno, f"not valid JSON ({exc.msg})") from None
        validate_event(event, lineno, len(events))
        events.append(event)
    if require_complete and (not events or events[-1]["kind"] != "run_finished"):
        raise TrajectoryError(lineno + 1, "log ends without run_finished; truncated here")
    return events
