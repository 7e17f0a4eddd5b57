import json
import re

import pytest
import yaml

from mars.cli import main
from mars.config import load_config, parse_config
from mars.errors import ConfigError
from mars.trajectory import read_trajectory

BASE = {
    "mode": "sim",
    "seed": 3,
    "search": {"time_budget": 60},
    "reward": {"w": -0.07},
    "paths": {"output": "run"},
}


def write_config(tmp_path, **overrides):
    cfg = json.loads(json.dumps(BASE))
    for section, value in overrides.items():
        if isinstance(value, dict) and isinstance(cfg.get(section), dict):
            cfg[section].update(value)
        else:
            cfg[section] = value
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return path


def test_run_writes_artifacts(tmp_path, capsys):
    path = write_config(tmp_path)
    assert main(["run", "--config", str(path)]) == 0
    run = tmp_path / "run"
    for name in ("trajectory.jsonl", "report.json", "best_series.csv", "config.json", "tree-0.json",
                 "tree-0.dot", "best.json"):
        assert (run / name).exists(), name
    assert (run / "lessons" / "index.jsonl").exists()
    assert (run / "best" / "runfile.py").exists()
    assert "best metric" in capsys.readouterr().out


def test_run_is_idempotent(tmp_path):
    path = write_config(tmp_path)
    main(["run", "--config", str(path)])
    first = (tmp_path / "run" / "trajectory.jsonl").read_bytes()
    lessons = sorted(p.name for p in (tmp_path / "run" / "lessons").iterdir())
    main(["run", "--config", str(path)])
    assert (tmp_path / "run" / "trajectory.jsonl").read_bytes() == first
    assert sorted(p.name for p in (tmp_path / "run" / "lessons").iterdir()) == lessons


def test_positive_weight_rejected(tmp_path, capsys):
    path = write_config(tmp_path, reward={"w": 0.1})
    assert main(["run", "--config", str(path)]) == 2
    assert "reward.w" in capsys.readouterr().err


def test_config_lists_every_problem(tmp_path):
    path = write_config(tmp_path, reward={"w": 0.1}, search={"n_i": 0, "bogus": 1}, extra={"x": 1})
    with pytest.raises(ConfigError) as exc:
        load_config(path)
    text = str(exc.value)
    for needle in ("reward.w", "search.n_i", "search.bogus", "extra"):
        assert needle in text


def test_seed_precedence(tmp_path):
    raw = {"seed": 5, "search": {"seed": 9}}
    assert parse_config(raw).search.seed == 5
    assert parse_config(raw, seed=11).search.seed == 11
    assert parse_config({"search": {"seed": 9}}).search.seed == 9
    assert parse_config(raw).landscape.seed == 5


def test_zero_budget_rejected_at_load():
    with pytest.raises(ConfigError):
        parse_config({"search": {"time_budget": 0}})


def test_llm_mode_needs_task(tmp_path):
    with pytest.raises(ConfigError) as exc:
        parse_config({"mode": "llm", "llm": {"base_url": "http://x"}}, base_dir=tmp_path)
    assert "task.description" in str(exc.value)
    (tmp_path / "task.md").write_text("Predict things.")
    cfg = parse_config({"mode": "llm", "task": {"description_file": "task.md"}}, base_dir=tmp_path)
    assert cfg.task.description == "Predict things." and cfg.review == "llm"


def test_two_trees_share_one_lesson_store(tmp_path):
    path = write_config(tmp_path, search={"num_trees": 2})
    assert main(["run", "--config", str(path)]) == 0
    run = tmp_path / "run"
    assert (run / "tree-0.json").exists() and (run / "tree-1.json").exists()
    events = read_trajectory(run / "trajectory.jsonl")
    origin_trees = {e["tree"] for e in events if e["kind"] == "lesson_added"}
    assert origin_trees == {0, 1}
    ids = [e["lesson"] for e in events if e["kind"] == "lesson_added"]
    assert len(ids) == len(set(ids))
    assert sorted(p.stem for p in (run / "lessons").glob("0*.json")) == sorted(ids)


def test_replay_matches_and_writes_csv(tmp_path, capsys):
    main(["run", "--config", str(write_config(tmp_path))])
    log = tmp_path / "run" / "trajectory.jsonl"
    csv = tmp_path / "series.csv"
    assert main(["replay", str(log), "--check", "--csv", str(csv)]) == 0
    assert "replay matches" in capsys.readouterr().out
    assert csv.read_text() == (tmp_path / "run" / "best_series.csv").read_text()


def test_replay_detects_tampering(tmp_path):
    main(["run", "--config", str(write_config(tmp_path))])
    report = tmp_path / "run" / "report.json"
    doc = json.loads(report.read_text())
    doc["effective_solution_rate"] += 0.01
    report.write_text(json.dumps(doc))
    assert main(["replay", str(tmp_path / "run" / "trajectory.jsonl"), "--check"]) == 3


def test_replay_truncated_log(tmp_path, capsys):
    main(["run", "--config", str(write_config(tmp_path))])
    log = tmp_path / "run" / "trajectory.jsonl"
    lines = log.read_text().splitlines(keepends=True)
    log.write_text("".join(lines[:30]))
    assert main(["replay", str(log)]) == 3
    assert "line 31" in capsys.readouterr().err


def test_export_counts_match_log(tmp_path):
    main(["run", "--config", str(write_config(tmp_path))])
    run = tmp_path / "run"
    created = sum(e["kind"] == "node_created" for e in read_trajectory(run / "trajectory.jsonl"))
    assert main(["export-tree", str(run), "--format", "doc"]) == 0
    doc = json.loads((run / "tree.json").read_text())
    nodes = doc["trees"][0]["nodes"]
    assert len(nodes) == created + 1
    fields = {"id", "parent", "children", "status", "action", "solution", "metric", "cost", "visits",
              "value", "branch_id", "cited_lessons", "debug_depth"}
    assert fields <= set(nodes[1])
    assert main(["export-tree", str(run), "--format", "graph"]) == 0
    dot = (run / "tree.dot").read_text()
    assert dot.startswith("digraph") and dot.rstrip().endswith("}")
    assert len(re.findall(r"^\s+t0n\d+ \[label=", dot, re.M)) == created + 1
    assert len(re.findall(r"->", dot)) == created
    assert dot.count("{") == dot.count("}")


def test_export_small_tree(tmp_path):
    from mars.export import tree_document, tree_dot
    from mars.search import TreeState

    tree = TreeState.new()
    a = tree.add_child(0, "draft")
    tree.add_child(a.id, "improve")
    b = tree.add_child(0, "draft")
    tree.add_child(b.id, "debug")
    dot = tree_dot(tree_document(tree))
    assert len(tree_document(tree)["nodes"]) == 5
    assert dot.count("->") == 4
    assert 'label="debug", color=firebrick' in dot


def test_report_command(tmp_path, capsys):
    main(["run", "--config", str(write_config(tmp_path))])
    capsys.readouterr()
    assert main(["report", str(tmp_path / "run"), "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc == json.loads((tmp_path / "run" / "report.json").read_text())
    assert main(["report", str(tmp_path / "run")]) == 0
    assert "effective solution rate" in capsys.readouterr().out


def test_missing_config_is_config_error(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.yaml")]) == 2


def test_shipped_sim_config_loads():
    from pathlib import Path
    cfg = load_config(Path(__file__).parents[1] / "configs" / "sim.yaml")
    assert cfg.mode == "sim" and cfg.search.seed == 42


def test_search_flags_override_config(tmp_path, capsys):
    path = write_config(tmp_path)
    assert main(["run", "--config", str(path), "--time-budget", "20", "--n-i", "3", "--w", "0",
                 "--policy", "greedy"]) == 0
    saved = json.loads((tmp_path / "run" / "config.json").read_text())
    assert saved["search"]["time_budget"] == 20 and saved["search"]["n_i"] == 3
    assert saved["search"]["policy"] == "greedy" and saved["reward"]["w"] == 0
    # overrides go through the same validation as the file
    assert main(["run", "--config", str(path), "--w", "0.5"]) == 2
    assert main(["run", "--config", str(path), "--n-d", "0"]) == 2
    assert "search.n_d" in capsys.readouterr().err
