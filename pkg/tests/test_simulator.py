import math

import numpy as np
import pytest

from mars.drivers.contract import TaskContext
from mars.harness import FAILURE, SUCCESS, TIMEOUT
from mars.lessons import SOLUTION, Lesson
from mars.reward import MetricSpec
from mars.simulator import LandscapeParams, Simulator

TASK = TaskContext("synthetic")
N = 10_000


def lesson(i):
    return Lesson(SOLUTION, f"l{i}", {"causal_change": "a", "impact_analysis": "b", "generalized_rule": "c"},
                  id=f"{i:05d}")


def drafts(sim, n, lessons=()):
    return [sim.draft(node_id=i, task=TASK, lessons=list(lessons), previous_ideas=[]) for i in range(1, n + 1)]


def test_draft_determinism():
    a, b = Simulator(LandscapeParams(seed=1)), Simulator(LandscapeParams(seed=1))
    da, db = drafts(a, 50), drafts(b, 50)
    assert [r.diff for r in da] == [r.diff for r in db]
    assert [a.latents[i] for i in range(1, 51)] == [b.latents[i] for i in range(1, 51)]
    c = Simulator(LandscapeParams(seed=2))
    drafts(c, 50)
    assert [a.latents[i].quality for i in range(1, 51)] != [c.latents[i].quality for i in range(1, 51)]


def test_draft_quality_mean_within_three_standard_errors():
    p = LandscapeParams(seed=3)
    sim = Simulator(p)
    drafts(sim, N)
    q = np.array([sim.latents[i].quality for i in range(1, N + 1)])
    assert abs(q.mean() - p.draft_mean) < 3 * p.draft_sd / math.sqrt(N)


def test_draft_cites_only_what_it_sees():
    sim = Simulator(LandscapeParams(seed=4, cite_prob=1.0))
    assert all(not r.citations for r in drafts(sim, 20))
    pool = [lesson(i) for i in range(1, 6)]
    sim = Simulator(LandscapeParams(seed=4, cite_prob=1.0))
    results = drafts(sim, 200, pool)
    ids = {l.id for l in pool}
    assert all(r.citations and r.citations <= ids for r in results)


def improve_children(sim, n, lessons=()):
    parent = sim.draft(node_id=0, task=TASK, lessons=[], previous_ideas=[])
    from mars.repo import repo_from_creations
    repo = repo_from_creations(parent.diff, parent.main)
    for j in range(1, n + 1):
        sim.improve(node_id=j, task=TASK, repo=repo, summary="", lessons=list(lessons))
    base = sim.latents[0].quality
    return np.array([sim.latents[j].quality - base for j in range(1, n + 1)])


def test_improve_delta_mean():
    p = LandscapeParams(seed=5, gamma=1.0, lesson_boost=0.0)
    deltas = improve_children(Simulator(p), N)
    assert abs(deltas.mean() - p.improve_mean) < 3 * p.improve_sd / math.sqrt(N)


def test_lesson_boost_paired_shift():
    p = LandscapeParams(seed=6, gamma=1.0, lesson_boost=0.1, cite_prob=1.0)
    with_lessons = improve_children(Simulator(p), 2000, [lesson(1)])
    without = improve_children(Simulator(p), 2000)
    assert (with_lessons - without).mean() == pytest.approx(0.1, abs=1e-9)


def test_bug_prob_one_always_fails():
    sim = Simulator(LandscapeParams(seed=7, bug_prob=1.0))
    from mars.repo import repo_from_creations
    for r in drafts(sim, 50):
        out = sim.run(repo_from_creations(r.diff, r.main), 1e6, 0)
        assert out.exit_status == FAILURE and "Final Validation Metric" not in out.captured_output


def test_valid_run_prints_sentinel_and_orients():
    from mars.repo import repo_from_creations
    sim = Simulator(LandscapeParams(seed=8, bug_prob=0.0), MetricSpec("rmse", lower_is_better=True))
    r = drafts(sim, 1)[0]
    out = sim.run(repo_from_creations(r.diff, r.main), 1e6, 1)
    assert out.exit_status == SUCCESS
    assert out.metric_line == pytest.approx(-sim.latents[1].quality, abs=0.05)


def test_cost_above_limit_times_out():
    from mars.repo import repo_from_creations
    sim = Simulator(LandscapeParams(seed=9, bug_prob=0.0, cost_log_mean=math.log(1000)))
    r = drafts(sim, 1)[0]
    out = sim.run(repo_from_creations(r.diff, r.main), 5.0, 1)
    assert out.exit_status == TIMEOUT and out.cost.t == out.cost.L == 5.0
    assert sim.clock.elapsed() == pytest.approx(5.0 + sim.params.draft_overhead)


def test_cost_independent_of_quality_when_rho_zero():
    sim = Simulator(LandscapeParams(seed=10, rho=0.0))
    drafts(sim, N)
    q = np.array([sim.latents[i].quality for i in range(1, N + 1)])
    t = np.array([sim.draw_time(i, sim.latents[i]) for i in range(1, N + 1)])
    r = np.corrcoef(q, np.log(t))[0, 1]
    assert abs(r) < 3 / math.sqrt(N)


def test_rho_induces_correlation():
    sim = Simulator(LandscapeParams(seed=10, rho=0.8, cost_branch_sd=0.0))
    drafts(sim, 2000)
    q = np.array([sim.latents[i].quality for i in range(1, 2001)])
    t = np.array([sim.draw_time(i, sim.latents[i]) for i in range(1, 2001)])
    assert np.corrcoef(q, np.log(t))[0, 1] > 0.7


def test_params_validation():
    with pytest.raises(ValueError):
        LandscapeParams(bug_prob=1.5)
    with pytest.raises(ValueError):
        LandscapeParams(gamma=0.0)
