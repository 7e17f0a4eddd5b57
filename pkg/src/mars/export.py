"""Tree exports: a JSON document with every node field, and Graphviz DOT for viewing."""

from __future__ import annotations

import json
import os
from pathlib import Path

from .search import TreeState

STATUS_COLORS = {"root": "lightgray", "draft-pending": "khaki", "valid": "palegreen", "buggy": "lightcoral"}
ACTION_COLORS = {"draft": "steelblue", "improve": "darkgreen", "debug": "firebrick"}


def tree_document(tree: TreeState) -> dict:
    return {
        "tree": tree.tree,
        "root_id": tree.root_id,
        "best_id": tree.best_id,
        "valid_since_best": tree.valid_since_best,
        "elapsed": tree.elapsed,
        "nodes": [n.to_dict() for n in tree.nodes.values()],
    }


def _label(node: dict) -> str:
    if node["status"] == "root":
        return "root"
    text = f"{node['id']} {node['action']}"
    if node["metric"] is not None:
        text += f"\\n{node['metric']:.4g}"
    if node["cost"] is not None:
        text += f"\\nt={node['cost']['t']:.3g}"
    return text


def tree_dot(doc: dict | list[dict]) -> str:
    """DOT digraph; several tree documents become one graph with a cluster per tree."""
    docs = doc if isinstance(doc, list) else [doc]
    lines = ["digraph search {", "  node [shape=box, style=filled, fontname=Helvetica];"]
    for d in docs:
        k = d["tree"]
        lines.append(f"  subgraph cluster_{k} {{")
        lines.append(f'    label="tree {k}";')
        for n in d["nodes"]:
            color = STATUS_COLORS.get(n["status"], "white")
            extra = ", penwidth=3" if n["id"] == d["best_id"] else ""
            lines.append(f'    t{k}n{n["id"]} [label="{_label(n)}", fillcolor={color}{extra}];')
        for n in d["nodes"]:
            if n["parent"] is not None:
                color = ACTION_COLORS.get(n["action"], "black")
                lines.append(f'    t{k}n{n["parent"]} -> t{k}n{n["id"]} [label="{n["action"]}", color={color}];')
        lines.append("  }")
    lines.append("}")
    return "\n".join(lines) + "\n"


def write_atomic(path: str | Path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def write_tree(tree: TreeState, run_dir: str | Path) -> dict:
    doc = tree_document(tree)
    write_atomic(Path(run_dir) / f"tree-{tree.tree}.json", json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return doc


def load_trees(run_dir: str | Path) -> list[dict]:
    paths = sorted(Path(run_dir).glob("tree-*.json"), key=lambda p: int(p.stem.split("-")[1]))
    return [json.loads(p.read_text(encoding="utf-8")) for p in paths]
