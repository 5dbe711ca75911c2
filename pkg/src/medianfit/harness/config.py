"""Run configuration: one JSON file with ``ga``, ``training``, ``synthetic`` and ``data`` sections."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from ..data import STATUSES, SyntheticConfig, synthetic_config_from_dict
from ..errors import ConfigError
from ..evo import GARunConfig
from ..metrics import DEFAULT_BINS, DEFAULT_MIN_COUNT, DEFAULT_SWEEP_POINTS
from ..nn_core import TrainingSchedule

SECTIONS = ("ga", "training", "synthetic", "data")


@dataclass
class DataOptions:
    system_status: str | None = "off"
    split_seed: int | None = None
    n_bins: int = DEFAULT_BINS
    min_count: int = DEFAULT_MIN_COUNT
    sweep_points: int = DEFAULT_SWEEP_POINTS
    column_map: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.system_status is not None and self.system_status not in STATUSES:
            raise ConfigError(f"system_status must be one of {STATUSES} or null")
        if self.n_bins < 1 or self.min_count < 1 or self.sweep_points < 2:
            raise ConfigError("n_bins, min_count must be >= 1 and sweep_points >= 2")


@dataclass
class RunConfig:
    ga: GARunConfig = field(default_factory=GARunConfig)
    training: TrainingSchedule = field(default_factory=TrainingSchedule)
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    data: DataOptions = field(default_factory=DataOptions)

    def to_dict(self) -> dict:
        return {name: asdict(getattr(self, name)) for name in SECTIONS}


def _build(cls, section, values):
    values = values or {}
    if not isinstance(values, dict):
        raise ConfigError(f"section {section!r} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {section!r}: {', '.join(unknown)}")
    try:
        return cls(**values)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {section!r} section: {exc}") from None


def config_from_dict(d: dict) -> RunConfig:
    if not isinstance(d, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = sorted(set(d) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
    synthetic = d.get("synthetic")
    if synthetic is not None and not isinstance(synthetic, dict):
        raise ConfigError("section 'synthetic' must be an object")
    return RunConfig(
        ga=_build(GARunConfig, "ga", d.get("ga")),
        training=_build(TrainingSchedule, "training", d.get("training")),
        synthetic=synthetic_config_from_dict(synthetic),
        data=_build(DataOptions, "data", d.get("data")),
    )


def load_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(d)
