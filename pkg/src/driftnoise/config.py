"""Experiment configuration: YAML key-value files with typed fields.

Unknown keys are rejected by name; type mismatches report the line.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, fields

import yaml

from .errors import ConfigError

EXPERIMENTS = (
    "density-check", "goodness-scan", "correlation", "drift-obstruction",
    "compose-check", "drift-diagram", "cocycle-demo", "girsanov-check",
)
BROWNIAN = ("drift-obstruction", "compose-check", "drift-diagram")


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int = 0
    replicas: int = 10_000
    depth: int = 12
    n_range: list = field(default_factory=lambda: [2, 5])
    c_list: list = field(default_factory=lambda: [0.0, 0.5, 1.0, math.sqrt(2) / 2])
    lam: float = 0.3  # key "lambda" in files
    output_dir: str = "out"
    workers: int = 1
    max_minima: int = 16
    fine_depth: int = 4
    instances: int = 100
    density_params: list = field(default_factory=lambda: [[1.0, 1.0, 1.0], [0.5, 2.0, 1.0], [1.0, 1.0, 1 / 9]])
    golden: str | None = None
    plot: bool = False

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        for name in ("replicas", "depth", "workers", "max_minima", "fine_depth", "instances"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if len(self.n_range) != 2 or self.n_range[0] < 1 or self.n_range[1] < self.n_range[0]:
            raise ConfigError("n_range must be [lo, hi] with 1 <= lo <= hi")
        if self.experiment in BROWNIAN and self.experiment != "compose-check" and self.depth < self.n_range[1] + 2:
            raise ConfigError(f"depth must be >= max(n_range) + 2 = {self.n_range[1] + 2}")
        for row in self.density_params:
            if len(row) != 3 or min(row) <= 0:
                raise ConfigError("density_params entries must be [a, b, epsilon] with positive values")
        return self

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["lambda"] = d.pop("lam")
        return d

    @classmethod
    def from_dict(cls, data: dict, lines: dict | None = None) -> "ExperimentConfig":
        lines = lines or {}
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a mapping of keys to values")
        known = {_file_key(f.name): f for f in fields(cls)}
        unknown = sorted(k for k in data if k not in known)
        if unknown:
            raise ConfigError("unknown configuration keys: " + ", ".join(map(str, unknown)),
                              line=lines.get(unknown[0]))
        if "experiment" not in data:
            raise ConfigError("missing required key 'experiment'")
        kwargs = {}
        for key, value in data.items():
            f = known[key]
            kwargs[f.name] = _coerce(key, value, _SCHEMA[f.name], lines.get(key))
        return cls(**kwargs).validate()


def _file_key(name):
    return "lambda" if name == "lam" else name


# field name -> expected type tag
_SCHEMA = {
    "experiment": "str", "seed": "int", "replicas": "int", "depth": "int", "n_range": "int_list",
    "c_list": "float_list", "lam": "float", "output_dir": "str", "workers": "int", "max_minima": "int",
    "fine_depth": "int", "instances": "int", "density_params": "float_rows", "golden": "opt_str", "plot": "bool",
}


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return (isinstance(v, (int, float)) and not isinstance(v, bool))


def _coerce(key, value, kind, line):
    def bad(expected):
        raise ConfigError(f"key {key!r} expects {expected}, got {type(value).__name__} {value!r}", line=line)

    if kind == "int":
        return value if _is_int(value) else bad("an integer")
    if kind == "float":
        return float(value) if _is_num(value) else bad("a number")
    if kind == "str":
        return value if isinstance(value, str) else bad("a string")
    if kind == "opt_str":
        return value if value is None or isinstance(value, str) else bad("a string or null")
    if kind == "bool":
        return value if isinstance(value, bool) else bad("true or false")
    if kind == "int_list":
        if isinstance(value, list) and all(_is_int(v) for v in value):
            return list(value)
        return bad("a list of integers")
    if kind == "float_list":
        if isinstance(value, list) and all(_is_num(v) for v in value):
            return [float(v) for v in value]
        return bad("a list of numbers")
    if kind == "float_rows":
        if isinstance(value, list) and all(isinstance(r, list) and all(_is_num(v) for v in r) for r in value):
            return [[float(v) for v in r] for r in value]
        return bad("a list of [a, b, epsilon] rows")
    raise AssertionError(kind)


def load_config_text(text: str) -> ExperimentConfig:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"cannot parse configuration: {exc}", line=mark.line + 1 if mark else None) from exc
    lines = {}
    if isinstance(node, yaml.MappingNode):
        for k, _ in node.value:
            lines[k.value] = k.start_mark.line + 1
    if data is None:
        data = {}
    return ExperimentConfig.from_dict(data, lines)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration file {path}: {exc}") from exc
    return load_config_text(text)


def apply_overrides(cfg: ExperimentConfig, **over) -> ExperimentConfig:
    changes = {k: v for k, v in over.items() if v is not None}
    return dataclasses.replace(cfg, **changes).validate()
