#!/usr/bin/env python3
"""
Scenario configuration.

One JSON document describes a campaign: temperature and path axes, the
conditions to synthesize, propagation coefficients, noise augmentation,
training/search settings and the output directory. Documented in SCHEMAS.md.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, List, Optional, Tuple

from augment import NoiseSpec
from autoencoder import SearchSpace, TrainConfig
from errors import ConfigError, GwShmError
from settings import DEFAULT_SEED, OUT_DIR, RECORD_LENGTH, SAMPLE_RATE_HZ, WINDOW_SECONDS
from signal_model import MAX_DAMAGE_SIZE_MM, Condition, PathSpec, PropagationParams

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ConditionSpec:
    kind: Condition
    sizes: Tuple[float, ...] = (0.0,)

    def __post_init__(self):
        object.__setattr__(self, "kind", Condition(self.kind))
        object.__setattr__(self, "sizes", tuple(float(s) for s in self.sizes))
        if not self.sizes:
            raise ConfigError(f"condition {self.kind.value} lists no sizes")
        if self.kind is Condition.BASELINE and self.sizes != (0.0,):
            raise ConfigError("Baseline condition takes no damage sizes")
        if self.kind is not Condition.BASELINE and not all(1.0 <= s <= MAX_DAMAGE_SIZE_MM for s in self.sizes):
            raise ConfigError(f"{self.kind.value} sizes must be in [1, {MAX_DAMAGE_SIZE_MM:g}] mm, got {list(self.sizes)}")


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    temperatures: Tuple[float, ...]
    paths: Tuple[PathSpec, ...]
    conditions: Tuple[ConditionSpec, ...]
    propagation: PropagationParams = field(default_factory=PropagationParams)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    search: SearchSpace = field(default_factory=SearchSpace)
    seed: int = DEFAULT_SEED
    output_dir: str = OUT_DIR
    center_frequency: float = 75e3
    cycles: int = 5
    sample_rate: float = SAMPLE_RATE_HZ
    record_length: int = RECORD_LENGTH
    window_seconds: float = WINDOW_SECONDS
    distance_jitter_mm: float = 0.0
    split: Tuple[float, float, float] = (0.5, 0.2, 0.3)
    kfold: int = 5

    def __post_init__(self):
        if not self.temperatures:
            raise ConfigError("temperatures must not be empty")
        if not all(math.isfinite(t) for t in self.temperatures):
            raise ConfigError("temperatures must be finite")
        if not self.paths:
            raise ConfigError("paths must not be empty")
        ids = [p.path_id for p in self.paths]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"duplicate path ids in {ids}")
        if not self.conditions:
            raise ConfigError("conditions must not be empty")
        kinds = [c.kind for c in self.conditions]
        if len(set(kinds)) != len(kinds):
            raise ConfigError("each condition kind may appear once")
        if self.record_length < 1 or self.distance_jitter_mm < 0:
            raise ConfigError("record_length must be >= 1 and distance_jitter_mm >= 0")

    @property
    def reference_temperature(self) -> float:
        return self.propagation.reference_temperature

    def train_config(self) -> TrainConfig:
        """Training settings seeded from the scenario seed."""
        return replace(self.train, seed=self.seed)

    def with_overrides(self, seed: Optional[int] = None, output_dir: Optional[str] = None) -> "ScenarioConfig":
        changes: Dict[str, Any] = {}
        if seed is not None:
            changes["seed"] = seed
        if output_dir is not None:
            changes["output_dir"] = output_dir
        return replace(self, **changes) if changes else self

    def clean_record_count(self) -> int:
        cases = sum(len(c.sizes) for c in self.conditions)
        return len(self.temperatures) * len(self.paths) * cases

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["conditions"] = [{"kind": c.kind.value, "sizes": list(c.sizes)} for c in self.conditions]
        data["temperatures"] = list(self.temperatures)
        data["paths"] = [asdict(p) for p in self.paths]
        data["train"] = {k: v for k, v in asdict(self.train).items() if k != "seed"}
        data["search"] = {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self.search).items()}
        data["split"] = list(self.split)
        data["noise"] = asdict(self.noise)
        if math.isinf(self.noise.snr_db):
            data["noise"]["snr_db"] = None
        return data


def _section(cls, raw: Any, name: str, tuples: Tuple[str, ...] = ()):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"{name} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown keys in {name}: {sorted(unknown)}")
    values = {k: tuple(v) if k in tuples else v for k, v in raw.items()}
    return cls(**values)


def scenario_from_dict(data: Dict) -> ScenarioConfig:
    """Validate a parsed JSON document into a ScenarioConfig."""
    if not isinstance(data, dict):
        raise ConfigError("scenario must be a JSON object")
    known = {f.name for f in fields(ScenarioConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
    for key in ("name", "temperatures", "paths", "conditions"):
        if key not in data:
            raise ConfigError(f"missing required key {key!r}")

    try:
        noise = dict(data.get("noise") or {})
        if noise.get("snr_db", 0) is None:
            noise["snr_db"] = math.inf
        train = data.get("train")
        if isinstance(train, dict) and "seed" in train:
            raise ConfigError("train.seed is taken from the scenario seed")

        values = dict(data)
        values.update(
            temperatures=tuple(float(t) for t in data["temperatures"]),
            paths=tuple(PathSpec(**p) for p in data["paths"]),
            conditions=tuple(ConditionSpec(c["kind"], tuple(c.get("sizes", (0.0,)))) for c in data["conditions"]),
            propagation=_section(PropagationParams, data.get("propagation"), "propagation"),
            noise=_section(NoiseSpec, noise, "noise"),
            train=_section(TrainConfig, train, "train"),
            search=_section(SearchSpace, data.get("search"), "search",
                            tuples=("learning_rate", "batch_size", "epochs")),
            split=tuple(data.get("split", (0.5, 0.2, 0.3))),
        )
        return ScenarioConfig(**values)
    except GwShmError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(exc.message) from exc
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"invalid scenario: {exc}") from exc


def load_scenario(path: str) -> ScenarioConfig:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    scenario = scenario_from_dict(data)
    logger.debug("[SYNTH] loaded scenario %s from %s", scenario.name, path)
    return scenario


def default_scenario(name: str = "default", temperatures: Optional[List[float]] = None) -> ScenarioConfig:
    """Small experimental-style scenario used when no config is given."""
    temps = temperatures or [float(t) for t in range(0, 95, 5)]
    paths = tuple(PathSpec(f"P{i + 1}", 180.0 if i < 3 else 160.0, "horizontal" if i < 3 else "vertical")
                  for i in range(6))
    return ScenarioConfig(
        name=name,
        temperatures=tuple(temps),
        paths=paths,
        conditions=(ConditionSpec(Condition.BASELINE), ConditionSpec(Condition.TRF, (20.0,)),
                    ConditionSpec(Condition.LFA, (20.0,))),
    )


def dumps(scenario: ScenarioConfig) -> str:
    return json.dumps(scenario.to_dict(), indent=2, sort_keys=True)
