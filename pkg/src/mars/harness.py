"""Run a materialized solution under a wall-clock limit and review the result."""

from __future__ import annotations

import json
import os
import re
import signal
import subprocess
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .errors import HarnessError, ParseError, ReviewFailed, SchemaError
from .repo import SolutionRepo, materialize
from .reward import ExecutionCost

SUCCESS, FAILURE, TIMEOUT = "success", "failure", "timeout"

METRIC_LINE = re.compile(
    r"^[ \t]*Final Validation Metric:[ \t]*([+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)[ \t]*\r?$",
    re.MULTILINE,
)

DEFAULT_OUTPUT_CAP = 64 * 1024


@dataclass(frozen=True)
class ReviewRecord:
    summary: str
    metric: float | None
    valid_metric: bool

    def __post_init__(self):
        if self.valid_metric and self.metric is None:
            raise SchemaError("metric", "valid_metric is true but no metric was reported")


@dataclass(frozen=True)
class ExecutionOutcome:
    exit_status: str
    captured_output: str
    cost: ExecutionCost
    metric_line: float | None = None
    returncode: int | None = None

    def __post_init__(self):
        if self.exit_status not in (SUCCESS, FAILURE, TIMEOUT):
            raise ValueError(f"unknown exit status {self.exit_status!r}")
        if self.exit_status == TIMEOUT and self.cost.t != self.cost.L:
            raise ValueError("a timed-out execution must record t == L")

    @property
    def ok(self) -> bool:
        return self.exit_status == SUCCESS


def parse_metric_line(output: str) -> float | None:
    matches = METRIC_LINE.findall(output or "")
    return float(matches[-1]) if matches else None


def tail_truncate(text: str, cap: int) -> str:
    """Keep at most ``cap`` UTF-8 bytes from the end, starting on a line boundary."""
    raw = text.encode("utf-8")
    if len(raw) <= cap:
        return text
    tail = raw[-cap:]
    if raw[-cap - 1:-cap] != b"\n":
        nl = tail.find(b"\n")
        tail = tail[nl + 1:] if nl >= 0 else b""
    return tail.decode("utf-8", errors="ignore")


def _kill_group(proc: subprocess.Popen) -> None:
    try:
        os.killpg(proc.pid, signal.SIGKILL)
    except (ProcessLookupError, PermissionError):
        proc.kill()


def execute_solution(
    repo: SolutionRepo,
    limit: float,
    workdir: str | os.PathLike,
    entry_command: Sequence[str] = ("{python}", "{main}"),
    output_cap: int = DEFAULT_OUTPUT_CAP,
    env: dict | None = None,
) -> ExecutionOutcome:
    workdir = Path(workdir)
    materialize(repo, workdir)
    argv = [a.format(python=sys.executable, main=repo.main) for a in entry_command]
    started = time.monotonic()
    try:
        proc = subprocess.Popen(
            argv, cwd=workdir, stdout=subprocess.PIPE, stderr=subprocess.STDOUT,
            stdin=subprocess.DEVNULL, start_new_session=True, env=env,
        )
    except OSError as exc:
        raise HarnessError(f"could not start {argv!r}: {exc}") from exc
    try:
        out, _ = proc.communicate(timeout=limit)
        elapsed = time.monotonic() - started
        status = SUCCESS if proc.returncode == 0 else FAILURE
        cost = ExecutionCost.clamped(max(elapsed, 1e-6), limit)
    except subprocess.TimeoutExpired:
        _kill_group(proc)
        out, _ = proc.communicate()
        status = TIMEOUT
        cost = ExecutionCost(limit, limit)
    text = out.decode("utf-8", errors="replace")
    if status == TIMEOUT:
        text += f"\n[harness] killed after {limit:g}s time limit\n"
    (workdir / "stdout.log").write_text(text, encoding="utf-8")
    (workdir / "exit.meta").write_text(json.dumps({
        "status": status, "returncode": proc.returncode, "t": cost.t, "L": cost.L,
    }) + "\n")
    metric = parse_metric_line(text) if status == SUCCESS else None
    return ExecutionOutcome(status, tail_truncate(text, output_cap), cost, metric, proc.returncode)


class SubprocessHarness:
    """Executes each node in ``<run>/<node-id>/``."""

    def __init__(self, run_dir: str | os.PathLike, entry_command: Sequence[str] = ("{python}", "{main}"),
                 output_cap: int = DEFAULT_OUTPUT_CAP, env: dict | None = None):
        self.run_dir = Path(run_dir)
        self.entry_command = tuple(entry_command)
        self.output_cap = output_cap
        self.env = env

    def workdir(self, node_id) -> Path:
        return self.run_dir / str(node_id)

    def run(self, repo: SolutionRepo, limit: float, node_id) -> ExecutionOutcome:
        return execute_solution(repo, limit, self.workdir(node_id), self.entry_command, self.output_cap, self.env)


def review_outcome(outcome: ExecutionOutcome, generator=None, mode: str = "deterministic", **review_kwargs):
    """Turn an execution outcome into a ReviewRecord.

    ``mode="llm"`` asks the generator to validate the metric for successful
    runs; ``"deterministic"`` accepts any successful run that printed the
    sentinel line.
    """
    if not outcome.ok:
        tail = outcome.captured_output[-2000:]
        return ReviewRecord(f"execution {outcome.exit_status}:\n{tail}", None, False)
    if mode == "llm":
        try:
            rec = generator.review_execution(output=outcome.captured_output, **review_kwargs)
        except (ParseError, ValueError) as exc:
            raise ReviewFailed(str(exc)) from exc
        return rec
    metric = outcome.metric_line
    if metric is None:
        return ReviewRecord("no 'Final Validation Metric' line in output", None, False)
    return ReviewRecord(f"Final Validation Metric: {metric!r}", metric, True)
