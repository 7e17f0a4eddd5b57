"""Budget-aware tree search over solution repositories.

One ``TreeSearch`` owns one tree. Several of them can run in threads
(``run_forest``) and then share only the lesson pool, the event log and the
``BestRegister``.
"""

from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

from .budget import WallClock
from .drivers.contract import SolutionView, TaskContext
from .errors import InvalidMetric, MarsError
from .harness import TIMEOUT, ExecutionOutcome, review_outcome
from .lessons import DEBUG, SOLUTION, LessonPool, recent_lessons
from .repo import DiffSet, SolutionRepo, apply_diff, repo_from_creations, repo_stats
from .reward import (
    ExecutionCost,
    MetricSpec,
    RewardParams,
    efficiency_reward,
    global_normalized_score,
    is_improved,
    oriented_metric,
)
from .trajectory import TrajectoryLog

log = logging.getLogger(__name__)

ROOT, PENDING, VALID, BUGGY = "root", "draft-pending", "valid", "buggy"
DRAFT, IMPROVE, DEBUG_ACTION = "draft", "improve", "debug"
POLICIES = ("uct", "greedy")


@dataclass
class SearchConfig:
    time_budget: float = 200.0
    # Per-node execution limit; None means a sixth of the time budget.
    exec_limit: float | None = None
    c_uct: float = 1.41421
    n_i: int = 2
    n_d: int = 10
    n_s: int = 5
    k_m: int = 30
    seed: int = 0
    num_trees: int = 1
    policy: str = "uct"

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ValueError("; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        if not (self.time_budget >= 0 and math.isfinite(self.time_budget)):
            out.append(f"search.time_budget must be a finite non-negative number, got {self.time_budget}")
        if self.exec_limit is not None and not (self.exec_limit > 0):
            out.append(f"search.exec_limit must be positive, got {self.exec_limit}")
        if not (self.c_uct > 0):
            out.append(f"search.c_uct must be positive, got {self.c_uct}")
        for name in ("n_i", "n_d", "n_s", "k_m", "num_trees"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                out.append(f"search.{name} must be a positive integer, got {value!r}")
        if self.policy not in POLICIES:
            out.append(f"search.policy must be one of {POLICIES}, got {self.policy!r}")
        return out

    @property
    def limit(self) -> float:
        if self.exec_limit is not None:
            return self.exec_limit
        return self.time_budget / 6 if self.time_budget > 0 else 1.0


@dataclass
class SearchNode:
    id: int
    parent: int | None
    status: str
    action: str | None = None
    children: list[int] = field(default_factory=list)
    solution: SolutionRepo | None = None
    metric: float | None = None
    score: float | None = None  # oriented metric
    cost: ExecutionCost | None = None
    visits: int = 0
    value: float = 0.0
    branch_id: int | None = None
    cited_lessons: set[str] = field(default_factory=set)
    debug_depth: int = 0
    idea: str = ""
    summary: str = ""
    output: str = ""
    analysis: str = ""
    error: str | None = None
    executed: bool = False
    diff: DiffSet | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "parent": self.parent,
            "children": list(self.children),
            "status": self.status,
            "action": self.action,
            "solution": self.solution.to_dict() if self.solution is not None else None,
            "metric": self.metric,
            "score": self.score,
            "cost": None if self.cost is None else {"t": self.cost.t, "L": self.cost.L},
            "visits": self.visits,
            "value": self.value,
            "branch_id": self.branch_id,
            "cited_lessons": sorted(self.cited_lessons),
            "debug_depth": self.debug_depth,
            "idea": self.idea,
            "summary": self.summary,
            "analysis": self.analysis,
            "error": self.error,
        }


@dataclass
class TreeState:
    tree: int = 0
    nodes: dict[int, SearchNode] = field(default_factory=dict)
    root_id: int = 0
    best_id: int | None = None
    valid_since_best: int = 0
    elapsed: float = 0.0
    history: list[float] = field(default_factory=list)

    @classmethod
    def new(cls, tree: int = 0) -> "TreeState":
        state = cls(tree=tree)
        state.nodes[0] = SearchNode(0, None, ROOT)
        return state

    @property
    def root(self) -> SearchNode:
        return self.nodes[self.root_id]

    @property
    def best(self) -> SearchNode | None:
        return None if self.best_id is None else self.nodes[self.best_id]

    def add_child(self, parent_id: int, action: str) -> SearchNode:
        parent = self.nodes[parent_id]
        nid = len(self.nodes)
        branch = nid if parent.status == ROOT else parent.branch_id
        depth = parent.debug_depth + 1 if action == DEBUG_ACTION else 0
        node = SearchNode(nid, parent_id, PENDING, action, branch_id=branch, debug_depth=depth)
        self.nodes[nid] = node
        parent.children.append(nid)
        return node

    def path(self, node_id: int) -> list[int]:
        """Node ids from ``node_id`` up to the root, inclusive."""
        out = []
        cur = node_id
        while cur is not None:
            out.append(cur)
            cur = self.nodes[cur].parent
        return out


def uct_score(child: SearchNode, parent_visits: int, c_uct: float) -> float:
    if child.visits == 0:
        return math.inf
    return child.value + c_uct * math.sqrt(math.log(parent_visits) / child.visits)


def is_fully_expanded(node: SearchNode, tree: TreeState, cfg: SearchConfig) -> bool:
    if node.status == ROOT:
        return bool(node.children) and tree.valid_since_best < cfg.n_s
    if node.status == VALID:
        return len(node.children) >= cfg.n_i
    # buggy nodes (and anything not yet reviewed) never take new children
    return True


def select_candidate(tree: TreeState, cfg: SearchConfig) -> int:
    node = tree.root
    while is_fully_expanded(node, tree, cfg):
        if not node.children:
            return tree.root_id  # dead end: re-activate the root for a new draft
        best, best_score = None, -math.inf
        for cid in node.children:
            s = uct_score(tree.nodes[cid], node.visits, cfg.c_uct)
            if best is None or s > best_score:
                best, best_score = cid, s
        node = tree.nodes[best]
    return node.id


def greedy_candidate(tree: TreeState, cfg: SearchConfig) -> int:
    """Baseline policy: keep improving the incumbent; draft only until one exists."""
    return tree.root_id if tree.best_id is None else tree.best_id


SELECTORS = {"uct": select_candidate, "greedy": greedy_candidate}


def backpropagate(tree: TreeState, leaf: int, reward: float) -> list[int]:
    if not math.isfinite(reward):
        raise ValueError(f"reward must be finite, got {reward}")
    path = tree.path(leaf)
    for nid in path:
        n = tree.nodes[nid]
        n.visits += 1
        n.value += (reward - n.value) / n.visits
    return path


class BestRegister:
    """Best valid solution across every tree of a run."""

    def __init__(self):
        self._lock = threading.Lock()
        self.tree: int | None = None
        self.node: int | None = None
        self.score: float | None = None
        self.metric: float | None = None
        self.solution: SolutionRepo | None = None

    def offer(self, tree: int, node: SearchNode) -> bool:
        with self._lock:
            if not is_improved(node.score, self.score):
                return False
            self.tree, self.node, self.score, self.metric, self.solution = (
                tree, node.id, node.score, node.metric, node.solution)
            return True


@dataclass
class SearchResult:
    tree: TreeState
    elapsed: float
    stop_reason: str

    @property
    def best(self) -> SearchNode | None:
        return self.tree.best

    @property
    def no_solution(self) -> bool:
        return self.tree.best_id is None


def _view(node: SearchNode) -> SolutionView:
    return SolutionView(
        node_id=node.id, repo=node.solution, metric=node.metric,
        exec_time=None if node.cost is None else node.cost.t,
        summary=node.summary, output=node.output, analysis=node.analysis,
        valid=node.status == VALID,
    )


class _BudgetSpent(Exception):
    pass


class TreeSearch:
    def __init__(
        self,
        cfg: SearchConfig,
        generator,
        harness,
        lessons: LessonPool,
        *,
        task: TaskContext | None = None,
        metric: MetricSpec | None = None,
        reward: RewardParams | None = None,
        log: TrajectoryLog | None = None,
        clock=None,
        tree: int = 0,
        best: BestRegister | None = None,
        dedup: Callable | None = None,
        review_mode: str = "deterministic",
        on_iteration: Callable[["TreeSearch"], None] | None = None,
    ):
        self.cfg = cfg
        self.gen = generator
        self.harness = harness
        self.pool = lessons
        self.task = task or TaskContext("")
        self.metric = metric or MetricSpec("metric")
        self.reward = reward or RewardParams()
        self.log = log or TrajectoryLog()
        self.clock = clock or getattr(generator, "clock", None) or WallClock()
        self.state = TreeState.new(tree)
        self.best = best
        self.dedup = dedup or generator.review_duplicate
        self.review_mode = review_mode
        self.on_iteration = on_iteration
        self.select = SELECTORS[cfg.policy]
        self.ideas: list[str] = []
        self._leaf: SearchNode | None = None

    # -- bookkeeping ---------------------------------------------------------

    def _emit(self, kind: str, node: int | None = None, **payload):
        return self.log.emit(kind, self.state.tree, node, self.clock.elapsed(), **payload)

    def remaining(self) -> float:
        return self.cfg.time_budget - self.clock.elapsed()

    def _check_budget(self, node: SearchNode | None, where: str):
        if self.remaining() <= 0:
            if node is not None:
                self._fail(node, f"time budget exhausted {where}")
            raise _BudgetSpent(where)

    def _created(self, node: SearchNode, citations: set[str]):
        known = set()
        for cid in sorted(citations):
            if self.pool.get(cid) is None:
                self._emit("citation_miss", node.id, lesson=cid)
            else:
                known.add(cid)
        node.cited_lessons = known
        self._emit(
            "node_created", node.id, parent=node.parent, action=node.action, branch=node.branch_id,
            debug_depth=node.debug_depth, citations=sorted(known), idea=node.idea[:500],
            stats=repo_stats(node.solution) if node.solution is not None else None,
            error=node.error,
        )
        for cid in sorted(known):
            lesson = self.pool.get(cid)
            self._emit("lesson_cited", node.id, lesson=cid, category=lesson.category,
                       origin_branch=lesson.origin_branch, origin_tree=lesson.origin_tree,
                       branch=node.branch_id)

    def _fail(self, node: SearchNode, error: str):
        node.status = BUGGY
        node.error = error
        node.metric = node.score = None
        self._emit("reviewed", node.id, status=BUGGY, metric=None, oriented=None, summary=error[:500])

    # -- one node ------------------------------------------------------------

    def _generate(self, node: SearchNode, parent: SearchNode):
        """Run the generator for ``node``; returns True when there is a repo to execute."""
        try:
            if node.action == DRAFT:
                lessons = recent_lessons(self.pool, SOLUTION, self.cfg.k_m)
                res = self.gen.draft(node_id=node.id, task=self.task, lessons=lessons,
                                     previous_ideas=list(reversed(self.ideas)))
                node.idea = res.idea
                self.ideas.append(res.idea)
                node.solution = repo_from_creations(res.diff, res.main)
            elif node.action == IMPROVE:
                lessons = recent_lessons(self.pool, SOLUTION, self.cfg.k_m)
                res = self.gen.improve(node_id=node.id, task=self.task, repo=parent.solution,
                                       summary=parent.summary, lessons=lessons)
                node.solution = apply_diff(parent.solution, res.diff)
                node.analysis = res.analysis
            else:
                lessons = recent_lessons(self.pool, DEBUG, self.cfg.k_m)
                res = self.gen.debug(node_id=node.id, task=self.task, repo=parent.solution,
                                     output=parent.output, lessons=lessons)
                node.solution = apply_diff(parent.solution, res.diff)
                node.analysis = res.analysis
            node.diff = res.diff
        except MarsError as exc:
            node.error = f"{type(exc).__name__}: {exc}"
            node.solution = parent.solution
            node.output = parent.output
            node.diff = None
            self._created(node, set())
            self._fail(node, node.error)
            return False
        self._created(node, set(res.citations))
        self._check_budget(node, "during generation")
        return True

    def _execute(self, node: SearchNode):
        limit = min(self.cfg.limit, self.remaining())
        if limit <= 0:
            self._check_budget(node, "before execution")
        try:
            outcome: ExecutionOutcome = self.harness.run(node.solution, limit, node.id)
        except MarsError as exc:
            self._fail(node, f"{type(exc).__name__}: {exc}")
            return
        node.executed = True
        node.cost = outcome.cost
        node.output = outcome.captured_output
        self._emit("executed", node.id, exit_status=outcome.exit_status, t=outcome.cost.t,
                   L=outcome.cost.L, returncode=outcome.returncode)
        if outcome.exit_status == TIMEOUT and limit < self.cfg.limit:
            self._fail(node, "killed: time budget exhausted during execution")
            raise _BudgetSpent("during execution")
        try:
            rec = review_outcome(outcome, self.gen, self.review_mode, node_id=node.id,
                                 task=self.task, repo=node.solution)
            if not rec.valid_metric:
                self._fail(node, rec.summary or "review rejected the metric")
                return
            score = oriented_metric(rec.metric, self.metric)
        except (MarsError, InvalidMetric) as exc:
            self._fail(node, f"{type(exc).__name__}: {exc}")
            return
        node.status = VALID
        node.metric, node.score, node.summary = rec.metric, score, rec.summary
        self._emit("reviewed", node.id, status=VALID, metric=rec.metric, oriented=score, summary=rec.summary[:500])
        self._on_valid(node)

    def _on_valid(self, node: SearchNode):
        st = self.state
        st.history.append(node.score)
        incumbent = st.best
        self._distill(lambda: self.gen.distill_solution_lesson(
            node_id=node.id, best=None if incumbent is None else _view(incumbent), new=_view(node)), node)
        if is_improved(node.score, None if incumbent is None else incumbent.score):
            st.best_id = node.id
            st.valid_since_best = 0
            self._emit("best_updated", node.id, metric=node.metric, oriented=node.score)
            if self.best is not None:
                self.best.offer(st.tree, node)
        else:
            st.valid_since_best += 1

    def _distill(self, make, node: SearchNode):
        try:
            candidate = make()
        except MarsError as exc:
            self._emit("lesson_rejected", node.id, category=None, reason=f"distillation failed: {exc}")
            return
        candidate = replace(candidate, origin_node=node.id, origin_branch=node.branch_id,
                            origin_tree=self.state.tree)
        res = self.pool.add(candidate, self.dedup)
        if res.accepted:
            self._emit("lesson_added", node.id, lesson=res.lesson.id, category=res.lesson.category,
                       origin_branch=node.branch_id, title=res.lesson.title)
        elif res.error is not None:
            self._emit("lesson_quarantined", node.id, category=candidate.category, reason=res.error)
        else:
            self._emit("lesson_rejected", node.id, category=candidate.category, reason="duplicate")

    def _make_node(self, parent: SearchNode, action: str) -> SearchNode:
        node = self.state.add_child(parent.id, action)
        self._leaf = node
        return node

    def _expand_one(self, parent: SearchNode, action: str) -> SearchNode:
        node = self._make_node(parent, action)
        if self._generate(node, parent):
            self._execute(node)
        return node

    def _debug_chain(self, node: SearchNode) -> SearchNode:
        cur = node
        while cur.status == BUGGY and cur.debug_depth < self.cfg.n_d:
            self._check_budget(None, "before debugging")
            child = self._expand_one(cur, DEBUG_ACTION)
            if child.executed and cur.executed:
                self._distill(lambda: self.gen.distill_debug_lesson(
                    node_id=child.id, before=_view(cur), diff=child.diff, after=_view(child)), child)
            cur = child
        return cur

    def node_reward(self, node: SearchNode) -> float:
        if node.status != VALID:
            return 0.0
        g = global_normalized_score(node.score, self.state.history)
        cost = ExecutionCost(node.cost.t, max(node.cost.t, self.cfg.limit))
        return efficiency_reward(g, cost, self.reward)

    def iterate(self) -> None:
        st = self.state
        cand = st.nodes[self.select(st, self.cfg)]
        self._leaf = None
        try:
            leaf = self._expand_one(cand, DRAFT if cand.status == ROOT else IMPROVE)
            if leaf.status == BUGGY and leaf.executed:
                self._debug_chain(leaf)
        finally:
            # the last node created this iteration ends the path, even when the budget ran out
            if self._leaf is not None:
                r = self.node_reward(self._leaf)
                path = backpropagate(st, self._leaf.id, r)
                self._emit("backprop", self._leaf.id, reward=r, path=path)

    def run(self) -> SearchResult:
        reason = "budget"
        try:
            while True:
                self._check_budget(None, "between iterations")
                self.iterate()
                self.state.elapsed = self.clock.elapsed()
                if self.on_iteration is not None:
                    self.on_iteration(self)
        except _BudgetSpent as exc:
            self._emit("budget_exhausted", None, elapsed=self.clock.elapsed(), where=str(exc))
        self.state.elapsed = self.clock.elapsed()
        if self.on_iteration is not None:
            self.on_iteration(self)
        self._emit("search_finished", None, best=self.state.best_id, nodes=len(self.state.nodes) - 1,
                   elapsed=self.state.elapsed)
        return SearchResult(self.state, self.state.elapsed, reason)


def run_search(cfg: SearchConfig, generator, harness, lessons: LessonPool, **kwargs) -> SearchResult:
    """Run one tree until its time budget is spent."""
    return TreeSearch(cfg, generator, harness, lessons, **kwargs).run()


def run_forest(
    cfg: SearchConfig,
    make_worker: Callable[[int], tuple],
    lessons: LessonPool,
    **kwargs,
) -> tuple[list[SearchResult], BestRegister]:
    """Run ``cfg.num_trees`` trees concurrently over one lesson pool.

    ``make_worker(k)`` returns ``(generator, harness, clock)`` for tree ``k``.
    """
    best = BestRegister()
    results: list[SearchResult | None] = [None] * cfg.num_trees
    errors: list[BaseException] = []
    on_iteration = kwargs.pop("on_iteration", None)

    def work(k: int):
        try:
            gen, harness, clock = make_worker(k)
            results[k] = TreeSearch(cfg, gen, harness, lessons, clock=clock, tree=k, best=best,
                                    on_iteration=on_iteration, **kwargs).run()
        except BaseException as exc:  # surfaced to the caller below
            errors.append(exc)

    if cfg.num_trees == 1:
        work(0)
    else:
        threads = [threading.Thread(target=work, args=(k,), name=f"tree-{k}") for k in range(cfg.num_trees)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    if errors:
        raise errors[0]
    return results, best
