"""Independent reference implementations used as test oracles."""

from __future__ import annotations

import copy
import math
import random

import mpmath

from mars.errors import RepoError
from mars.repo import DiffHunk, DiffSet, SolutionRepo, apply_diff
from mars.search import BUGGY, ROOT, VALID, SearchConfig, SearchNode, TreeState, backpropagate

mpmath.mp.dps = 50


def reward_oracle(g: float, t: float, L: float, w: float) -> mpmath.mpf:
    return mpmath.mpf(g) * mpmath.exp(mpmath.mpf(w) * mpmath.log(mpmath.mpf(t) / mpmath.mpf(L)))


def uct_oracle(q: float, n: int, parent_n: int, c: float) -> mpmath.mpf:
    return mpmath.mpf(q) + mpmath.mpf(c) * mpmath.sqrt(mpmath.log(parent_n) / n)


def oracle_select(tree: TreeState, cfg: SearchConfig) -> int:
    """Brute force: score every child at each level and take the argmax, earliest id on ties."""

    def expanded(node: SearchNode) -> bool:
        if node.status == ROOT:
            return not (len(node.children) == 0 or tree.valid_since_best >= cfg.n_s)
        if node.status == VALID:
            return len(node.children) >= cfg.n_i
        return True

    def score(child: SearchNode, parent: SearchNode) -> float:
        if child.visits == 0:
            return math.inf
        return child.value + cfg.c_uct * (math.log(parent.visits) / child.visits) ** 0.5

    def descend(node: SearchNode) -> int:
        if not expanded(node):
            return node.id
        if not node.children:
            return tree.root_id
        scored = [(score(tree.nodes[c], node), -c) for c in node.children]
        _, neg_id = max(scored)
        return descend(tree.nodes[-neg_id])

    return descend(tree.root)


def random_tree(rng: random.Random, max_nodes: int = 100):
    """Random tree with random statuses and random backprops; returns (tree, rewards per node)."""
    tree = TreeState.new()
    size = rng.randint(1, max_nodes)
    for nid in range(1, size):
        parent = rng.choice(list(tree.nodes))
        if tree.nodes[parent].status == BUGGY and rng.random() < 0.5:
            parent = tree.root_id
        action = "draft" if parent == tree.root_id else "improve"
        node = tree.add_child(parent, action)
        node.status = rng.choice((VALID, VALID, BUGGY))
    rewards: dict[int, list[float]] = {nid: [] for nid in tree.nodes}
    # coarse reward grid so UCT ties actually happen
    grid = (0.0, 0.25, 0.5, 0.75, 1.0)
    for _ in range(rng.randint(0, 3 * size)):
        leaf = rng.choice(list(tree.nodes))
        r = rng.choice(grid) if rng.random() < 0.5 else rng.random()
        for nid in backpropagate(tree, leaf, r):
            rewards[nid].append(r)
    tree.valid_since_best = rng.randint(0, 7)
    return tree, rewards


def build_tree(rows, valid_since_best: int = 0) -> TreeState:
    """rows: (parent, status, visits, value) per node in creation order, root excluded."""
    tree = TreeState.new()
    tree.valid_since_best = valid_since_best
    for parent, status, visits, value in rows:
        if parent == 0:
            action = "draft"
        else:
            action = "debug" if tree.nodes[parent].status == BUGGY else "improve"
        node = tree.add_child(parent, action)
        node.status, node.visits, node.value = status, visits, value
    tree.root.visits = max(1, sum(tree.nodes[c].visits for c in tree.root.children))
    return tree


# (name, rows, valid_since_best, cfg overrides, expected node)
SCENARIOS = [
    ("root only", [], 0, {}, 0),
    ("single buggy leaf falls back to root", [(0, BUGGY, 1, 0.0)], 0, {}, 0),
    ("valid leaf without children", [(0, VALID, 1, 0.6)], 0, {}, 1),
    ("valid leaf below n_i", [(0, VALID, 2, 0.6), (1, BUGGY, 1, 0.0)], 0, {}, 1),
    ("valid node at n_i with buggy leaves falls back to root",
     [(0, VALID, 3, 0.4), (1, BUGGY, 1, 0.0), (1, BUGGY, 1, 0.0)], 0, {}, 0),
    ("stagnation at n_s re-activates root", [(0, VALID, 1, 0.6)], 5, {}, 0),
    ("stagnation just below n_s keeps descending", [(0, VALID, 1, 0.6)], 4, {}, 1),
    ("unvisited child outranks any visited sibling", [(0, VALID, 1, 0.99), (0, VALID, 0, 0.0)], 0, {}, 2),
    ("uct tie goes to the earlier child", [(0, VALID, 1, 0.5), (0, VALID, 1, 0.5)], 0, {}, 1),
    ("fewer visits wins at equal value", [(0, VALID, 2, 0.5), (0, VALID, 1, 0.5)], 0, {}, 2),
    ("higher value wins at equal visits", [(0, VALID, 1, 0.2), (0, VALID, 1, 0.9)], 0, {}, 2),
    ("descent through a fully expanded valid node",
     [(0, VALID, 3, 0.5), (1, VALID, 2, 0.8), (1, BUGGY, 1, 0.0), (2, BUGGY, 1, 0.0)], 0, {}, 2),
    ("debug chain leads to its fixed valid tail",
     [(0, BUGGY, 3, 0.2), (1, BUGGY, 2, 0.3), (2, VALID, 1, 0.6)], 0, {}, 3),
    ("everything expanded across branches falls back to root",
     [(0, VALID, 3, 0.4), (0, BUGGY, 1, 0.0), (1, BUGGY, 1, 0.0), (1, BUGGY, 1, 0.0)], 0, {}, 0),
    ("large exploration constant prefers the rarely visited child",
     [(0, VALID, 4, 0.6), (0, VALID, 1, 0.5)], 0, {"c_uct": 1.41421}, 2),
    ("small exploration constant prefers the better child",
     [(0, VALID, 4, 0.6), (0, VALID, 1, 0.5)], 0, {"c_uct": 0.01}, 1),
    ("n_i of 3 keeps a two-child valid node open",
     [(0, VALID, 3, 0.5), (1, BUGGY, 1, 0.0), (1, BUGGY, 1, 0.0)], 0, {"n_i": 3}, 1),
]


def occurrences(text: str, needle: str) -> int:
    """Overlapping occurrence count."""
    return sum(text.startswith(needle, i) for i in range(len(text)))


def naive_apply(files: dict, hunks) -> dict | None:
    """Reference: apply hunks one by one on a plain dict, None on any failure."""
    files = dict(files)
    for h in hunks:
        if h.search == "":
            if h.file in files:
                return None
            files[h.file] = h.replace
            continue
        if h.file not in files or occurrences(files[h.file], h.search) != 1:
            return None
        files[h.file] = files[h.file].replace(h.search, h.replace, 1)
        if files[h.file] == "":
            del files[h.file]
    return files


def random_case(rng: random.Random):
    words = ["alpha", "beta", "gamma", "delta", "eps"]
    files = {}
    for name in rng.sample(["a.py", "b.py", "c/d.py", "e.py"], rng.randint(1, 4)):
        files[name] = "".join(rng.choice(words) + "\n" for _ in range(rng.randint(1, 8)))
    files["runfile.py"] = "main\n"
    hunks = []
    state = dict(files)
    for _ in range(rng.randint(1, 5)):
        roll = rng.random()
        if roll < 0.15:
            name = rng.choice(["new.py", "f/g.py", rng.choice(list(state))])
            hunks.append(DiffHunk(name, "", rng.choice(words) + "\n"))
        elif roll < 0.3:
            hunks.append(DiffHunk(rng.choice(list(state)), rng.choice(words) + "\n", "zeta\n"))
        elif roll < 0.4:
            hunks.append(DiffHunk(rng.choice(list(state)), "missing\n", "zeta\n"))
        else:
            name = rng.choice(list(state))
            lines = state[name].splitlines(keepends=True)
            i = rng.randrange(len(lines))
            j = rng.randint(i + 1, len(lines))
            search = "".join(lines[i:j])
            hunks.append(DiffHunk(name, search, rng.choice(["", "omega\n", search + "more\n"])))
        nxt = naive_apply(state, hunks[-1:])
        if nxt is not None and "runfile.py" in nxt:
            state = nxt
    return files, DiffSet(tuple(hunks))


def check_atomicity(cases: int, seed: int = 0) -> tuple[int, int]:
    rng = random.Random(seed)
    ok = failed = 0
    for _ in range(cases):
        files, diff = random_case(rng)
        repo = SolutionRepo(files)
        snapshot = copy.deepcopy(repo.to_dict())
        expected = naive_apply(files, diff.hunks)
        if expected is not None and "runfile.py" not in expected:
            expected = None
        try:
            out = apply_diff(repo, diff)
        except RepoError:
            assert expected is None, diff
            failed += 1
        else:
            assert expected is not None, diff
            assert dict(out.modules) == expected
            ok += 1
        assert repo.to_dict() == snapshot
    return ok, failed
