"""
Scenario files: YAML loading, schema validation and CLI overrides.

A scenario names a background geometry, an optional perturbation and an ordered list of
tasks. Validation errors carry the line and column of the offending node.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import yaml

from capillary_lab.errors import ConfigurationError

OUTPUT_ENV = "CAPILLARY_LAB_OUT"
DEFAULT_OUTPUT = Path("build")

TOP_LEVEL_KEYS = ("name", "geometry", "perturbation", "tasks", "grid", "tolerances", "seed", "output", "corpus")
PERTURBATION_KINDS = ("background", "conformal", "warp_replacement")

# Every task parameter with its default; None means "derived from the geometry".
TASK_PARAMS: dict[str, dict[str, Any]] = {
    "geometry": {"samples": 100},
    "surface": {"t0": None, "graphs": 5, "amplitude": 0.02, "refinements": 3},
    "solve": {"t0": None, "target": 0.0, "jacobian": "analytic"},
    "foliate": {"t0": None, "t_range": None, "steps": 8},
    "verify": {"t0": None, "samples": 100, "directions": 100},
    "spectrum": {"t0": None, "potential_shift": 0.0},
    "cone": {"a": 1.0, "tau": [1.0, 1.2], "deltas": [-0.1, -0.01, 0.0, 0.01, 0.1], "disk": None},
    "barrier": {
        "a": [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        "c": [1.0, 0.0, 1.0],
        "lambda": 0.1,
        "hbar0": 0.0,
        "n_theta": 64,
    },
    "sweep": {"eps": [0.0, 0.005, 0.01, 0.02]},
    "corpus": {},
}


class _MarkedDict(dict):
    """Mapping that remembers where each key was written."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.marks: dict[Any, tuple[int, int]] = {}
        self.start: tuple[int, int] | None = None

    def mark(self, key: Any) -> dict[str, int]:
        line, column = self.marks.get(key, self.start or (None, None))
        return {"line": line, "column": column}


class ScenarioLoader(yaml.SafeLoader):
    """SafeLoader that builds mappings as _MarkedDict and rejects duplicate keys."""


def _construct_mapping(loader: ScenarioLoader, node: yaml.MappingNode) -> _MarkedDict:
    loader.flatten_mapping(node)
    data = _MarkedDict()
    data.start = (node.start_mark.line + 1, node.start_mark.column + 1)
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=True)
        where = (key_node.start_mark.line + 1, key_node.start_mark.column + 1)
        if key in data:
            raise ConfigurationError(f"duplicate key '{key}'", line=where[0], column=where[1])
        data[key] = loader.construct_object(value_node, deep=True)
        data.marks[key] = where
    return data


ScenarioLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def _section(data: Any, name: str, parent: _MarkedDict | None = None) -> _MarkedDict:
    if data is None:
        return _MarkedDict()
    if not isinstance(data, dict):
        where = parent.mark(name) if parent is not None else {}
        raise ConfigurationError(f"section '{name}' must be a mapping", **where)
    if not isinstance(data, _MarkedDict):
        data = _MarkedDict(data)
    return data


def _reject_unknown(data: _MarkedDict, allowed, where: str) -> None:
    for key in data:
        if key not in allowed:
            known = ", ".join(allowed)
            raise ConfigurationError(f"unknown key '{key}' in {where} (known: {known})", **data.mark(key))


def _number(data: _MarkedDict, key: str, default: float, kind=float):
    value = data.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"'{key}' must be a number, got {value!r}", **data.mark(key))
    if kind is int and int(value) != value:
        raise ConfigurationError(f"'{key}' must be an integer, got {value!r}", **data.mark(key))
    return kind(value)


def _params(data: _MarkedDict, key: str) -> dict[str, Any]:
    value = data.get(key) or {}
    if not isinstance(value, dict):
        raise ConfigurationError(f"'{key}' must be a mapping", **data.mark(key))
    return {str(k): _plain(v) for k, v in value.items()}


def _plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_plain(v) for v in value]
    return value


@dataclass(frozen=True)
class GeometrySpec:
    warp: str = "round"
    warp_params: dict[str, Any] = field(default_factory=dict)
    cross: str = "round"
    cross_params: dict[str, Any] = field(default_factory=dict)
    profile: str = "constant"
    profile_params: dict[str, Any] = field(default_factory=dict)
    endpoint_mode: str = "positive"
    strict_convexity: bool = False

    KEYS = ("warp", "warp_params", "cross", "cross_params", "profile", "profile_params", "endpoint_mode", "strict_convexity")

    @classmethod
    def parse(cls, data: _MarkedDict) -> "GeometrySpec":
        _reject_unknown(data, cls.KEYS, "geometry")
        mode = str(data.get("endpoint_mode", "positive"))
        if mode not in ("positive", "conical"):
            raise ConfigurationError(f"endpoint_mode must be 'positive' or 'conical', got '{mode}'", **data.mark("endpoint_mode"))
        return cls(
            warp=str(data.get("warp", "round")),
            warp_params=_params(data, "warp_params"),
            cross=str(data.get("cross", "round")),
            cross_params=_params(data, "cross_params"),
            profile=str(data.get("profile", "constant")),
            profile_params=_params(data, "profile_params"),
            endpoint_mode=mode,
            strict_convexity=bool(data.get("strict_convexity", False)),
        )


@dataclass(frozen=True)
class PerturbationSpec:
    kind: str = "background"
    u: str | None = None
    params: dict[str, Any] = field(default_factory=dict)
    eps: float = 0.0
    warp: str | None = None

    KEYS = ("kind", "u", "params", "eps", "warp")

    @classmethod
    def parse(cls, data: _MarkedDict) -> "PerturbationSpec":
        _reject_unknown(data, cls.KEYS, "perturbation")
        kind = str(data.get("kind", "background"))
        if kind not in PERTURBATION_KINDS:
            raise ConfigurationError(
                f"perturbation kind must be one of {', '.join(PERTURBATION_KINDS)}, got '{kind}'", **data.mark("kind")
            )
        spec = cls(
            kind=kind,
            u=data.get("u"),
            params=_params(data, "params"),
            eps=_number(data, "eps", 0.0),
            warp=data.get("warp"),
        )
        if kind == "conformal" and not spec.u:
            raise ConfigurationError("conformal perturbation needs 'u'", **data.mark("kind"))
        if kind == "warp_replacement" and not spec.warp:
            raise ConfigurationError("warp replacement needs 'warp'", **data.mark("kind"))
        return spec


@dataclass(frozen=True)
class GridSpec:
    n: int = 32
    beta: float = 0.5
    lattice: int = 200

    @classmethod
    def parse(cls, data: _MarkedDict) -> "GridSpec":
        _reject_unknown(data, ("n", "beta", "lattice"), "grid")
        n = _number(data, "n", 32, int)
        if n < 4 or n % 2:
            raise ConfigurationError(f"grid n must be an even integer >= 4, got {n}", **data.mark("n"))
        return cls(n=n, beta=_number(data, "beta", 0.5), lattice=_number(data, "lattice", 200, int))


@dataclass(frozen=True)
class Tolerances:
    newton: float = 1e-9
    audit: float = 1e-6
    margin: float = 1e-10
    gauss_bonnet: float = 1e-6

    @classmethod
    def parse(cls, data: _MarkedDict) -> "Tolerances":
        _reject_unknown(data, ("newton", "audit", "margin", "gauss_bonnet"), "tolerances")
        values = {key: _number(data, key, default) for key, default in asdict(cls()).items()}
        for key, value in values.items():
            if value <= 0:
                raise ConfigurationError(f"tolerance '{key}' must be positive", **data.mark(key))
        return cls(**values)


@dataclass(frozen=True)
class TaskSpec:
    name: str
    params: dict[str, Any] = field(default_factory=dict)

    def get(self, key: str) -> Any:
        return self.params.get(key, TASK_PARAMS[self.name][key])


def _parse_task(item: Any, index: int) -> TaskSpec:
    if isinstance(item, str):
        name, params = item, _MarkedDict()
        where = {}
    elif isinstance(item, dict) and len(item) == 1:
        name, params = next(iter(item.items()))
        where = item.mark(name) if isinstance(item, _MarkedDict) else {}
        params = _section(params, name, item if isinstance(item, _MarkedDict) else None)
    else:
        raise ConfigurationError(f"task #{index + 1} must be a name or a one-key mapping")
    if name not in TASK_PARAMS:
        raise ConfigurationError(f"unknown task '{name}' (known: {', '.join(TASK_PARAMS)})", **where)
    _reject_unknown(params, tuple(TASK_PARAMS[name]), f"task '{name}'")
    return TaskSpec(name, _plain(dict(params)))


@dataclass(frozen=True)
class Scenario:
    """A validated scenario; immutable, hashable through its canonical JSON form."""

    name: str
    geometry: GeometrySpec = field(default_factory=GeometrySpec)
    perturbation: PerturbationSpec = field(default_factory=PerturbationSpec)
    tasks: tuple[TaskSpec, ...] = ()
    grid: GridSpec = field(default_factory=GridSpec)
    tolerances: Tolerances = field(default_factory=Tolerances)
    seed: int = 0
    output: str | None = None
    corpus: tuple[dict[str, Any], ...] | None = None
    source: Path | None = field(default=None, compare=False)

    @classmethod
    def from_mapping(cls, data: Any, default_name: str = "scenario", source: Path | None = None) -> "Scenario":
        root = _section(data, "scenario")
        _reject_unknown(root, TOP_LEVEL_KEYS, "scenario")

        tasks_raw = root.get("tasks") or []
        if not isinstance(tasks_raw, list):
            raise ConfigurationError("'tasks' must be a list", **root.mark("tasks"))
        tasks = tuple(_parse_task(item, i) for i, item in enumerate(tasks_raw))

        output = _section(root.get("output"), "output", root)
        _reject_unknown(output, ("dir",), "output")

        corpus = root.get("corpus")
        if corpus is not None:
            if not isinstance(corpus, list):
                raise ConfigurationError("'corpus' must be a list", **root.mark("corpus"))
            for entry in corpus:
                entry = _section(entry, "corpus entry", root)
                _reject_unknown(entry, ("name", "perturbation", "params", "eps"), "corpus entry")
                if "perturbation" not in entry:
                    raise ConfigurationError("corpus entry needs 'perturbation'", **entry.mark("perturbation"))
            corpus = tuple(_plain(dict(entry)) for entry in corpus)

        return cls(
            name=str(root.get("name", default_name)),
            geometry=GeometrySpec.parse(_section(root.get("geometry"), "geometry", root)),
            perturbation=PerturbationSpec.parse(_section(root.get("perturbation"), "perturbation", root)),
            tasks=tasks,
            grid=GridSpec.parse(_section(root.get("grid"), "grid", root)),
            tolerances=Tolerances.parse(_section(root.get("tolerances"), "tolerances", root)),
            seed=_number(root, "seed", 0, int),
            output=output.get("dir"),
            corpus=corpus,
            source=source,
        )

    def to_dict(self) -> dict[str, Any]:
        data = {
            "name": self.name,
            "geometry": asdict(self.geometry),
            "perturbation": asdict(self.perturbation),
            "tasks": [{task.name: dict(task.params)} for task in self.tasks],
            "grid": asdict(self.grid),
            "tolerances": asdict(self.tolerances),
            "seed": self.seed,
            "output": {"dir": self.output},
        }
        if self.corpus is not None:
            data["corpus"] = [dict(entry) for entry in self.corpus]
        return data

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    def with_overrides(
        self,
        *,
        grid: int | None = None,
        tol: float | None = None,
        strict_convexity: bool | None = None,
    ) -> "Scenario":
        """Apply command-line flags on top of the file values."""
        updated = self
        if grid is not None:
            if grid < 4 or grid % 2:
                raise ConfigurationError(f"--grid must be an even integer >= 4, got {grid}")
            updated = replace(updated, grid=replace(updated.grid, n=grid))
        if tol is not None:
            if tol <= 0:
                raise ConfigurationError(f"--tol must be positive, got {tol}")
            updated = replace(updated, tolerances=replace(updated.tolerances, audit=tol))
        if strict_convexity:
            updated = replace(updated, geometry=replace(updated.geometry, strict_convexity=True))
        return updated

    def with_tasks(self, names: list[str]) -> "Scenario":
        """Keep only the named tasks, adding defaults for names the file does not list."""
        existing = {task.name: task for task in self.tasks}
        return replace(self, tasks=tuple(existing.get(name, TaskSpec(name)) for name in names))

    def output_dir(self, override: Path | None = None) -> Path:
        """Resolve the report directory: flag, scenario file, environment, then build/."""
        if override is not None:
            base = Path(override)
        elif self.output:
            base = Path(self.output)
        else:
            base = Path(os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)
        return base / self.name


def loads(text: str, default_name: str = "scenario", source: Path | None = None) -> Scenario:
    try:
        data = yaml.load(text, Loader=ScenarioLoader)
    except yaml.MarkedYAMLError as e:
        mark = e.problem_mark or e.context_mark
        where = {"line": mark.line + 1, "column": mark.column + 1} if mark else {}
        raise ConfigurationError(f"YAML syntax error: {e.problem or e}", **where) from None
    except yaml.YAMLError as e:
        raise ConfigurationError(f"YAML error: {e}") from None
    return Scenario.from_mapping(data, default_name=default_name, source=source)


def load_scenario(path: Path) -> Scenario:
    """Load and validate a scenario file."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"scenario file not found: {path}")
    return loads(path.read_text(encoding="utf-8"), default_name=path.stem, source=path)


def default_scenario() -> Scenario:
    """The round background used when no scenario file is given."""
    return Scenario(name="default")
