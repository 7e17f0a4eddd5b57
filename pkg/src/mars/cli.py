"""Command-line entry point: run, replay, export-tree, report.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .config import load_config
from .errors import ConfigError, MarsError, TrajectoryError
from .export import load_trees, tree_dot, write_atomic
from .metrics import RunReport, best_series_csv, build_report
from .search import SearchConfig
from .trajectory import read_trajectory

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

# every SearchConfig field except seed (which has its own flag) becomes --field-name
SEARCH_FLAGS = [f for f in dataclasses.fields(SearchConfig) if f.name != "seed"]


def _summary(report: RunReport) -> str:
    lines = []
    if report.best is None:
        lines.append("no valid solution found")
    else:
        b = report.best
        lines.append(f"best metric {b['metric']!r} (tree {b['tree']}, node {b['node']}, t={b['time']:.1f})")
    lines.append(f"nodes by status  {report.nodes_by_status}")
    lines.append(f"nodes by action  {report.nodes_by_action}")
    lines.append(f"effective solution rate {report.effective_solution_rate:.3f}")
    lines.append(f"lesson utilization {report.utilization_rate:.3f}  transfer {report.transfer_rate:.3f}")
    return "\n".join(lines)


def _overrides(args) -> dict:
    search = {f.name: getattr(args, f.name) for f in SEARCH_FLAGS if getattr(args, f.name) is not None}
    out = {"search": search} if search else {}
    if args.w is not None:
        out["reward"] = {"w": args.w}
    return out


def _flag_type(f: dataclasses.Field):
    if f.name == "policy":
        return str
    return int if isinstance(f.default, int) else float


def cmd_run(args) -> int:
    from .runner import execute_run

    try:
        cfg = load_config(args.config, seed=args.seed, mode=args.mode, overrides=_overrides(args))
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    if args.output:
        cfg.output = Path(args.output)
    try:
        outcome = execute_run(cfg)
    except MarsError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(_summary(outcome.report))
    print(f"artifacts in {cfg.output}")
    return EXIT_OK


def cmd_replay(args) -> int:
    try:
        events = read_trajectory(args.log)
    except (TrajectoryError, OSError) as exc:
        print(f"{args.log}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    report = build_report(events)
    doc = report.to_dict()
    if args.check:
        original_path = Path(args.log).with_name("report.json")
        try:
            original = json.loads(original_path.read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            print(f"cannot read {original_path}: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        # compare through JSON so tuples/lists and float reprs line up
        if json.loads(json.dumps(doc)) != original:
            print("replayed report differs from the recorded one", file=sys.stderr)
            return EXIT_RUNTIME
        print("replay matches recorded report")
    if args.csv:
        Path(args.csv).write_text(best_series_csv(report), encoding="utf-8")
    print(json.dumps(doc, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_export_tree(args) -> int:
    run = Path(args.run)
    trees = load_trees(run)
    if not trees:
        print(f"no tree exports found in {run}", file=sys.stderr)
        return EXIT_RUNTIME
    if args.format == "doc":
        target = Path(args.out) if args.out else run / "tree.json"
        write_atomic(target, json.dumps({"trees": trees}, indent=1, sort_keys=True) + "\n")
    else:
        target = Path(args.out) if args.out else run / "tree.dot"
        write_atomic(target, tree_dot(trees))
    print(target)
    return EXIT_OK


def cmd_report(args) -> int:
    run = Path(args.run)
    log_path = run / "trajectory.jsonl" if run.is_dir() else run
    try:
        events = read_trajectory(log_path, require_complete=False)
    except (TrajectoryError, OSError) as exc:
        print(f"{log_path}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    report = build_report(events)
    if args.json:
        print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    else:
        print(_summary(report))
        print("\n" + best_series_csv(report), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mars", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a search from a YAML config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--mode", choices=("sim", "llm"), default=None)
    p.add_argument("--output", default=None, help="override paths.output")
    for f in SEARCH_FLAGS:
        p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, type=_flag_type(f), default=None,
                       help=f"override search.{f.name}")
    p.add_argument("--w", type=float, default=None, help="override reward.w")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("replay", help="recompute the report from a trajectory log")
    p.add_argument("log")
    p.add_argument("--check", action="store_true", help="compare against report.json next to the log")
    p.add_argument("--csv", default=None, help="also write the best-metric series here")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("export-tree", help="export the search tree(s) of a run")
    p.add_argument("run")
    p.add_argument("--format", choices=("doc", "graph"), default="doc")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_export_tree)

    p = sub.add_parser("report", help="summarize a run (works on runs in progress)")
    p.add_argument("run")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
