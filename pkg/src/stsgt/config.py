"""YAML run configuration shared by every command.

Schema (all keys optional except ``data.path``)::

    output_dir: runs/jhu_cases      # relative paths resolve against the config file
    seed: 0
    data:
      source: jhu                   # jhu (county-wide layout) | nyt (state-long layout)
      path: data/time_series_covid19_confirmed_US.csv
      field: cases                  # cases | deaths (nyt only; jhu files hold one field)
      level: national               # national | state
      state: null                   # state name when level == state
      start: 2020-03-15
      end: 2021-11-30
      val_start: 2021-07-29         # with test_start: date-based split
      test_start: 2021-09-29
      fractions: [0.8, 0.1, 0.1]    # used when the split dates are absent
      clamp: true                   # negative daily counts -> 0
      normalization: per_split      # per_split | train_stats
      coords_path: null             # vertex,lat,lon CSV overriding derived coordinates
    graph:
      threshold: 0.3
      weight: similarity            # similarity | distance | binary
    model: {m: 12, h: 12, c_in: 16, num_layers: 2, ...}     # StsgtConfig fields
    train: {lr: 0.001, batch_size: 16, max_epochs: 100, ...}  # TrainConfig fields

``n`` and ``f`` are filled from the data, never from the file.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .errors import StsgtError
from .model import StsgtConfig
from .training import TrainConfig


class ConfigError(StsgtError, ValueError):
    module = "config"


@dataclass
class DataSection:
    path: Path | None = None
    source: str = "jhu"
    field: str = "cases"
    level: str = "national"
    state: str | None = None
    start: dt.date | None = None
    end: dt.date | None = None
    val_start: dt.date | None = None
    test_start: dt.date | None = None
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
    clamp: bool = True
    normalization: str = "per_split"
    coords_path: Path | None = None


@dataclass
class GraphSection:
    threshold: float = 0.3
    weight: str = "similarity"


@dataclass
class RunConfig:
    data: DataSection = field(default_factory=DataSection)
    graph: GraphSection = field(default_factory=GraphSection)
    model: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    output_dir: Path = Path("run")
    seed: int = 0
    source_file: Path | None = None

    def model_config(self, n: int, f: int = 1) -> StsgtConfig:
        return StsgtConfig(**{**self.model, "n": n, "f": f})

    def train_config(self, **overrides) -> TrainConfig:
        values = {"seed": self.seed, **self.train}
        values.update({k: v for k, v in overrides.items() if v is not None})
        return TrainConfig(**values)

    def validate(self) -> None:
        d = self.data
        if d.path is None:
            raise ConfigError("data.path is required")
        if d.source not in ("jhu", "nyt"):
            raise ConfigError(f"data.source must be jhu or nyt, got {d.source!r}")
        if d.field not in ("cases", "deaths"):
            raise ConfigError(f"data.field must be cases or deaths, got {d.field!r}")
        if d.level not in ("national", "state"):
            raise ConfigError(f"data.level must be national or state, got {d.level!r}")
        if d.level == "state" and (not d.state or d.source != "jhu"):
            raise ConfigError("data.level: state needs data.state and a jhu (county-row) source")
        if (d.val_start is None) != (d.test_start is None):
            raise ConfigError("give both data.val_start and data.test_start, or neither")
        if self.graph.weight not in ("similarity", "distance", "binary"):
            raise ConfigError(f"graph.weight must be similarity, distance or binary, got {self.graph.weight!r}")
        known = {f.name for f in dataclasses.fields(StsgtConfig)} - {"n", "f"}
        bad = set(self.model) - known
        if bad:
            raise ConfigError(f"unknown model keys {sorted(bad)}")
        known = {f.name for f in dataclasses.fields(TrainConfig)}
        bad = set(self.train) - known
        if bad:
            raise ConfigError(f"unknown train keys {sorted(bad)}")

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out.pop("source_file")
        return _plain(out)


def _plain(value):
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, dt.date):
        return value.isoformat()
    return value


def _date(value) -> dt.date | None:
    if value is None or isinstance(value, dt.date):
        return value
    try:
        return dt.date.fromisoformat(str(value))
    except ValueError:
        raise ConfigError(f"not an ISO date: {value!r}") from None


def parse_override(text: str) -> tuple[list[str], Any]:
    """``a.b=value`` -> (["a", "b"], YAML-parsed value)."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not key=value")
    key, raw = text.split("=", 1)
    return key.strip().split("."), yaml.safe_load(raw)


def apply_overrides(raw: dict, overrides) -> dict:
    for text in overrides or ():
        keys, value = parse_override(text)
        node = raw
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {text!r}: {k} is not a section")
        node[keys[-1]] = value
    return raw


def from_dict(raw: dict, base_dir: Path | None = None) -> RunConfig:
    raw = dict(raw or {})
    base = Path(base_dir) if base_dir is not None else Path.cwd()
    unknown = set(raw) - {"data", "graph", "model", "train", "output_dir", "seed"}
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")

    def resolve(p):
        if p is None:
            return None
        p = Path(str(p)).expanduser()
        return p if p.is_absolute() else (base / p)

    data_raw = dict(raw.get("data") or {})
    names = {f.name for f in dataclasses.fields(DataSection)}
    if set(data_raw) - names:
        raise ConfigError(f"unknown data keys {sorted(set(data_raw) - names)}")
    for key in ("start", "end", "val_start", "test_start"):
        data_raw[key] = _date(data_raw.get(key))
    data_raw["path"] = resolve(data_raw.get("path"))
    data_raw["coords_path"] = resolve(data_raw.get("coords_path"))
    if "fractions" in data_raw:
        data_raw["fractions"] = tuple(float(x) for x in data_raw["fractions"])

    graph_raw = dict(raw.get("graph") or {})
    if set(graph_raw) - {"threshold", "weight"}:
        raise ConfigError(f"unknown graph keys {sorted(set(graph_raw) - {'threshold', 'weight'})}")

    cfg = RunConfig(
        data=DataSection(**data_raw),
        graph=GraphSection(**graph_raw),
        model=dict(raw.get("model") or {}),
        train=dict(raw.get("train") or {}),
        output_dir=resolve(raw.get("output_dir", "run")),
        seed=int(raw.get("seed", 0)),
    )
    cfg.validate()
    return cfg


def load_config(path, overrides=None) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    cfg = from_dict(apply_overrides(raw, overrides), path.parent)
    cfg.source_file = path
    return cfg
