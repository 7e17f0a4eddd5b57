import json
import sys

import pytest

from mars.errors import HarnessError, ReviewFailed, SchemaError
from mars.harness import (
    FAILURE,
    SUCCESS,
    TIMEOUT,
    ExecutionOutcome,
    ReviewRecord,
    SubprocessHarness,
    execute_solution,
    parse_metric_line,
    review_outcome,
    tail_truncate,
)
from mars.repo import SolutionRepo
from mars.reward import ExecutionCost


def test_parse_metric_line():
    assert parse_metric_line("training\nFinal Validation Metric: 0.5\n") == 0.5
    assert parse_metric_line("Final Validation Metric: 0.1\nFinal Validation Metric: -2.5e-3\n") == -2.5e-3
    assert parse_metric_line("no metric here") is None
    assert parse_metric_line("Final Validation Metric: 0.123456789012345678") == 0.123456789012345678
    assert parse_metric_line("Final Validation Metric: 0.5%\n") is None


def test_tail_truncate_is_line_aligned():
    text = "".join(f"line {i}\n" for i in range(1000)) + "Final Validation Metric: 0.75\n"
    out = tail_truncate(text, 200)
    assert len(out.encode()) <= 200
    assert out.startswith("line ")
    assert parse_metric_line(out) == 0.75
    assert tail_truncate("short\n", 100) == "short\n"


def test_success_with_metric(tmp_path):
    repo = SolutionRepo({"util.py": "VALUE = 0.7\n",
                         "runfile.py": "from util import VALUE\nprint(f'Final Validation Metric: {VALUE}')\n"})
    out = execute_solution(repo, 30, tmp_path / "n1")
    assert out.exit_status == SUCCESS and out.metric_line == 0.7
    assert 0 < out.cost.t <= out.cost.L == 30
    meta = json.loads((tmp_path / "n1" / "exit.meta").read_text())
    assert meta["status"] == SUCCESS and meta["L"] == 30
    assert "Final Validation Metric" in (tmp_path / "n1" / "stdout.log").read_text()


def test_timeout_kills_and_clamps(tmp_path):
    repo = SolutionRepo({"runfile.py": "import time\nwhile True:\n    time.sleep(0.05)\n"})
    out = execute_solution(repo, 1.0, tmp_path)
    assert out.exit_status == TIMEOUT
    assert out.cost.t == out.cost.L == 1.0
    assert out.metric_line is None


def test_nonzero_exit_keeps_traceback(tmp_path):
    repo = SolutionRepo({"runfile.py": "print('Final Validation Metric: 0.9')\nraise ValueError('bad shape')\n"})
    out = execute_solution(repo, 30, tmp_path)
    assert out.exit_status == FAILURE and out.returncode != 0
    assert "ValueError: bad shape" in out.captured_output
    assert out.metric_line is None


def test_spawn_failure_is_harness_error(tmp_path):
    repo = SolutionRepo({"runfile.py": ""})
    with pytest.raises(HarnessError):
        execute_solution(repo, 5, tmp_path, entry_command=("/nonexistent/interpreter", "{main}"))


def test_subprocess_harness_uses_node_dirs(tmp_path):
    h = SubprocessHarness(tmp_path, entry_command=(sys.executable, "-u", "{main}"))
    h.run(SolutionRepo({"runfile.py": "print('hi')\n"}), 30, 7)
    assert (tmp_path / "7" / "runfile.py").exists()
    assert (tmp_path / "7" / "stdout.log").read_text().startswith("hi")


def outcome(status, text, metric=None, t=1.0, L=10.0):
    cost = ExecutionCost(L, L) if status == TIMEOUT else ExecutionCost(t, L)
    return ExecutionOutcome(status, text, cost, metric)


def test_deterministic_review():
    rec = review_outcome(outcome(SUCCESS, "Final Validation Metric: 0.7\n", 0.7))
    assert rec.valid_metric and rec.metric == 0.7
    assert not review_outcome(outcome(SUCCESS, "done\n")).valid_metric
    assert not review_outcome(outcome(FAILURE, "Traceback\n")).valid_metric
    assert not review_outcome(outcome(TIMEOUT, "killed\n")).valid_metric


class Reviewer:
    def __init__(self, rec=None, exc=None):
        self.rec, self.exc = rec, exc

    def review_execution(self, **kw):
        if self.exc:
            raise self.exc
        return self.rec


def test_model_review_can_reject_metric():
    ok = outcome(SUCCESS, "Final Validation Metric: 0.99\n", 0.99)
    rec = review_outcome(ok, Reviewer(ReviewRecord("leakage", 0.99, False)), "llm")
    assert not rec.valid_metric
    with pytest.raises(ReviewFailed):
        review_outcome(ok, Reviewer(exc=SchemaError("valid_metric")), "llm")


def test_review_record_invariant():
    with pytest.raises(SchemaError):
        ReviewRecord("x", None, True)


def test_timeout_outcome_invariant():
    with pytest.raises(ValueError):
        ExecutionOutcome(TIMEOUT, "", ExecutionCost(1, 2))
