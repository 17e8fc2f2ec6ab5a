"""Experiment configuration: nested frozen dataclasses loaded from strict JSON.

JSON sections: ``plant``, ``weather``, ``controller``, ``data``, ``scenario``
and ``io``. Every field is optional; unknown keys are rejected with an error
naming the full key path.
"""

from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .controller import ControllerConfig
from .datagen import FoGains
from .demand import DemandParams
from .plant import PlantConfig
from .weather import WeatherParams


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataConfig:
    T: int = 1000
    n_days: int = 8
    noise_ratio: float = 0.02
    ridge: float = 0.0
    fo: FoGains = field(default_factory=FoGains)

    def __post_init__(self):
        if self.T < 1 or self.n_days < 1:
            raise ValueError("T and n_days must be positive")
        if self.noise_ratio < 0:
            raise ValueError("noise_ratio must be non-negative")


@dataclass(frozen=True)
class IoConfig:
    predictor: str | None = None
    dataset: str | None = None


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything one experiment needs. ``start_hour``/``steps`` left as None
    take mode defaults (open loop and ablation: 11.88 h; closed loop: a full
    day from midnight)."""

    seed: int = 0
    start_hour: float | None = None
    steps: int | None = None
    uncertainty: bool = True
    demand: DemandParams = field(default_factory=DemandParams)
    plant: PlantConfig = field(default_factory=PlantConfig)
    weather: WeatherParams = field(default_factory=WeatherParams)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    data: DataConfig = field(default_factory=DataConfig)
    io: IoConfig = field(default_factory=IoConfig)

    def __post_init__(self):
        if self.steps is not None and self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.demand.csv_path is not None and not Path(self.demand.csv_path).exists():
            raise ValueError(f"demand CSV not found: {self.demand.csv_path}")
        if self.plant.sample_dt != self.controller.sample_dt:
            raise ValueError("plant and controller sample_dt differ")

    def to_dict(self) -> dict:
        return _to_jsonable(dataclasses.asdict(self))


_SECTIONS = ("plant", "weather", "controller", "data", "scenario", "io")


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {k: _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    return obj


def _build(cls, raw, path: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected an object, got {type(raw).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in raw.items():
        if key not in names:
            raise ConfigError(f"unknown config key: {path}.{key}")
        tp = hints[key]
        if dataclasses.is_dataclass(tp):
            base = getattr(cls(), key) if _has_defaults(cls) else tp()
            value = _merge(base, value, f"{path}.{key}")
        elif typing.get_origin(tp) is tuple:
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _has_defaults(cls) -> bool:
    try:
        cls()
    except TypeError:
        return False
    return True


def _merge(base, raw, path: str):
    built = _build(type(base), raw, path)
    changed = {k: getattr(built, k) for k in raw}
    return dataclasses.replace(base, **changed)


def from_dict(raw: dict) -> ScenarioConfig:
    """Build a :class:`ScenarioConfig` from the sectioned JSON layout."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object")
    for key in raw:
        if key not in _SECTIONS:
            raise ConfigError(f"unknown config key: {key}")
    scenario = dict(raw.get("scenario", {}))
    for section in ("plant", "weather", "controller", "data", "io"):
        if section in raw:
            if section in scenario:
                raise ConfigError(f"{section} given both at top level and under scenario")
            scenario[section] = raw[section]
    return _build(ScenarioConfig, scenario, "scenario")


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return from_dict(raw)


def to_sections(cfg: ScenarioConfig) -> dict:
    """Inverse of :func:`from_dict`: the fully resolved config in file layout."""
    d = cfg.to_dict()
    out = {s: d.pop(s) for s in ("plant", "weather", "controller", "data", "io")}
    out["scenario"] = d
    return out
