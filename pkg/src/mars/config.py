"""Run configuration: one YAML document, validated in full before anything runs.

Only the API key comes from the environment (``llm.api_key_env`` names the
variable); everything else lives in the file.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .drivers.contract import TaskContext
from .drivers.http import EndpointConfig
from .errors import ConfigError
from .reward import MetricSpec, RewardParams
from .search import SearchConfig
from .simulator import LandscapeParams

MODES = ("sim", "llm")
REVIEW_MODES = ("deterministic", "llm")
TOP_LEVEL = {"mode", "seed", "search", "reward", "metric", "review", "landscape", "llm", "task", "paths", "harness"}
LLM_EXTRA = {"record_to", "submission_cond", "test_modules", "dedup", "idea_budget"}


@dataclass
class RunConfig:
    mode: str = "sim"
    search: SearchConfig = field(default_factory=SearchConfig)
    reward: RewardParams = field(default_factory=RewardParams)
    metric: MetricSpec | None = None
    review: str = "deterministic"
    landscape: LandscapeParams | None = field(default_factory=LandscapeParams)
    endpoint: EndpointConfig | None = None
    llm_options: dict = field(default_factory=dict)
    task: TaskContext = field(default_factory=lambda: TaskContext("synthetic task"))
    output: Path = Path("runs/latest")
    prompts: str | None = None
    harness: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "mode": self.mode,
            "search": dataclasses.asdict(self.search),
            "reward": {"w": self.reward.w},
            "metric": None if self.metric is None else {"name": self.metric.name,
                                                        "lower_is_better": self.metric.lower_is_better},
            "review": self.review,
            "paths": {"output": str(self.output), "prompts": self.prompts},
            "harness": self.harness,
        }
        if self.mode == "sim":
            d["landscape"] = self.landscape.to_dict()
        else:
            ep = dataclasses.asdict(self.endpoint)
            d["llm"] = {**ep, **self.llm_options}
            d["task"] = {"description": self.task.description}
        return d


def _section(raw: dict, name: str, problems: list[str]) -> dict:
    value = raw.get(name) or {}
    if not isinstance(value, dict):
        problems.append(f"{name} must be a mapping")
        return {}
    return dict(value)


def _build(cls, name: str, values: dict, problems: list[str], allowed_extra=()):
    known = {f.name for f in dataclasses.fields(cls)}
    for key in sorted(set(values) - known - set(allowed_extra)):
        problems.append(f"{name}.{key} is not a recognised setting")
    kwargs = {k: v for k, v in values.items() if k in known}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        problems.extend(str(exc).split("; "))
        return None


def load_config(path: str | Path, seed: int | None = None, mode: str | None = None,
                overrides: dict[str, dict] | None = None) -> RunConfig:
    """Read a YAML config; ``overrides`` maps section -> {key: value} and wins over the file."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError([f"cannot read {path}: {exc}"]) from exc
    if not isinstance(raw, dict):
        raise ConfigError(["config must be a mapping at the top level"])
    for section, values in (overrides or {}).items():
        if not isinstance(raw.get(section, {}), dict):
            raise ConfigError([f"{section} must be a mapping"])
        raw[section] = {**(raw.get(section) or {}), **values}
    return parse_config(raw, base_dir=path.parent, seed=seed, mode=mode)


def parse_config(raw: dict, base_dir: str | Path = ".", seed: int | None = None,
                 mode: str | None = None) -> RunConfig:
    base_dir = Path(base_dir)
    problems: list[str] = []
    for key in sorted(set(raw) - TOP_LEVEL):
        problems.append(f"{key} is not a recognised section")

    mode = mode or raw.get("mode", "sim")
    if mode not in MODES:
        problems.append(f"mode must be one of {MODES}, got {mode!r}")
    search_raw = _section(raw, "search", problems)
    # --seed beats the top-level seed, which beats search.seed
    if seed is not None:
        search_raw["seed"] = seed
    elif raw.get("seed") is not None:
        search_raw["seed"] = raw["seed"]
    seed = search_raw.setdefault("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        problems.append(f"seed must be an integer, got {seed!r}")
        seed = search_raw["seed"] = 0
    search = _build(SearchConfig, "search", search_raw, problems)
    if search is not None and not search.time_budget > 0:
        problems.append(f"search.time_budget must be positive, got {search.time_budget}")

    reward = _build(RewardParams, "reward", _section(raw, "reward", problems), problems)

    metric = None
    metric_raw = _section(raw, "metric", problems)
    if metric_raw:
        extra = set(metric_raw) - {"name", "lower_is_better"}
        problems.extend(f"metric.{k} is not a recognised setting" for k in sorted(extra))
        if not isinstance(metric_raw.get("lower_is_better", False), bool):
            problems.append("metric.lower_is_better must be true or false")
        try:
            metric = MetricSpec(metric_raw.get("name", ""), bool(metric_raw.get("lower_is_better", False)))
        except ValueError as exc:
            problems.append(f"metric.name: {exc}")

    review = raw.get("review", "deterministic" if mode == "sim" else "llm")
    if review not in REVIEW_MODES:
        problems.append(f"review must be one of {REVIEW_MODES}, got {review!r}")

    landscape = endpoint = None
    llm_options: dict = {}
    task = TaskContext("synthetic task")
    if mode == "sim":
        land_raw = _section(raw, "landscape", problems)
        land_raw["seed"] = seed
        landscape = _build(LandscapeParams, "landscape", land_raw, problems)
        if metric is None:
            metric = MetricSpec("score")
    elif mode == "llm":
        llm_raw = _section(raw, "llm", problems)
        llm_options = {k: llm_raw.pop(k) for k in list(llm_raw) if k in LLM_EXTRA}
        endpoint = _build(EndpointConfig, "llm", llm_raw, problems)
        if llm_options.get("dedup", "llm") not in ("llm", "shingle"):
            problems.append("llm.dedup must be 'llm' or 'shingle'")
        task = _load_task(_section(raw, "task", problems), base_dir, problems)

    paths = _section(raw, "paths", problems)
    for key in sorted(set(paths) - {"output", "prompts"}):
        problems.append(f"paths.{key} is not a recognised setting")
    output = base_dir / paths.get("output", "runs/latest")
    prompts = str(base_dir / paths["prompts"]) if paths.get("prompts") else None

    harness = _section(raw, "harness", problems)
    for key in sorted(set(harness) - {"entry_command", "output_cap"}):
        problems.append(f"harness.{key} is not a recognised setting")

    if problems:
        raise ConfigError(problems)
    return RunConfig(mode, search, reward, metric, review, landscape, endpoint, llm_options, task,
                     output, prompts, harness)


def _load_task(raw: dict, base_dir: Path, problems: list[str]) -> TaskContext:
    def text(key: str) -> str:
        if raw.get(key):
            return str(raw[key])
        file_key = f"{key}_file"
        if raw.get(file_key):
            try:
                return (base_dir / raw[file_key]).read_text(encoding="utf-8")
            except OSError as exc:
                problems.append(f"task.{file_key}: {exc}")
        return ""

    allowed = {"description", "description_file", "context", "context_file", "model_candidates",
               "model_candidates_file"}
    problems.extend(f"task.{k} is not a recognised setting" for k in sorted(set(raw) - allowed))
    description = text("description")
    if not description.strip():
        problems.append("task.description (or task.description_file) is required in llm mode")
    return TaskContext(description, text("context"), text("model_candidates"))
