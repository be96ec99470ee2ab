"""Experiment configuration: one TOML document, every key optional, unknown keys rejected."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, get_type_hints

import tomli
import tomli_w

from .datagen import GeneratorSpec
from .loss import LossConfig
from .recurrent import ModelSpec
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class DataSection:
    dim: int = 1
    length: int = 128
    n_train: int = 700
    n_test: int = 300
    change_fraction_train: float = 0.489
    change_fraction_test: float = 0.527
    pre_mean: float = 1.0
    post_mean_range: list = field(default_factory=lambda: [2.0, 100.0])
    variance: float = 1.0
    multi: bool = False
    n_changes_range: list = field(default_factory=lambda: [0, 9])
    segment_means: str = "alternate"


@dataclass
class ModelSection:
    hidden_dim: int = 8
    cell: str = "lstm"
    dropout: float = 0.0


@dataclass
class TrainSection:
    regime: str = "indid"
    batch_size: int = 64
    learning_rate: float = 1e-3
    max_epochs: int = 100
    patience: int = 10
    min_delta: float = 0.0
    val_fraction: float = 0.2
    clip_norm: Optional[float] = None
    horizon: str = "full"
    horizon_value: Optional[int] = None
    c: Optional[float] = None
    remainder: str = "consistent"
    ablation_horizons: list = field(default_factory=lambda: [1, 2, 4, 8, 16, 32])


@dataclass
class DetectSection:
    multi_mode: str = "all"
    min_segment_len: int = 1
    penalty_min: float = 1.0
    penalty_max: float = 1e6
    penalty_count: int = 25
    cusum_mu0: float = 1.0
    cusum_mu1: float = 50.0
    cusum_sigma: float = 1.0
    cusum_limit_min: float = 1.0
    cusum_limit_max: float = 1e4
    cusum_limit_count: int = 25


@dataclass
class MetricsSection:
    grid_points: int = 41
    split: str = "test"


@dataclass
class ExperimentConfig:
    seed: int = 0
    data: DataSection = field(default_factory=DataSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    detect: DetectSection = field(default_factory=DetectSection)
    metrics: MetricsSection = field(default_factory=MetricsSection)

    # -- builders for the library specs ------------------------------------

    def generator_spec(self) -> GeneratorSpec:
        d = dataclasses.asdict(self.data)
        return GeneratorSpec(**d, seed=self.seed)

    def loss_config(self) -> LossConfig:
        t = self.train
        return LossConfig(t.horizon, t.horizon_value, t.c, t.remainder)

    def model_spec(self, input_dim: int) -> ModelSpec:
        m = self.model
        return ModelSpec(input_dim, m.hidden_dim, m.cell, m.dropout)

    def train_config(self, **override) -> TrainConfig:
        t = self.train
        kw = dict(regime=t.regime, batch_size=t.batch_size, learning_rate=t.learning_rate,
                  max_epochs=t.max_epochs, patience=t.patience, min_delta=t.min_delta,
                  loss=self.loss_config(), seed=self.seed, val_fraction=t.val_fraction,
                  clip_norm=t.clip_norm)
        kw.update(override)
        return TrainConfig(**kw)

    def validate(self) -> None:
        """Build every derived spec once so bad values surface as ConfigError."""
        for section, build in (("data", self.generator_spec), ("train", self.loss_config),
                               ("model", lambda: self.model_spec(self.data.dim)),
                               ("train", self.train_config)):
            try:
                build()
            except ValueError as exc:
                raise ConfigError(f"[{section}] {exc}") from exc
        if self.detect.multi_mode not in ("first", "all"):
            raise ConfigError("detect.multi_mode: must be 'first' or 'all'")
        if self.metrics.grid_points < 2:
            raise ConfigError("metrics.grid_points: must be >= 2")
        if any(int(h) < 1 for h in self.train.ablation_horizons):
            raise ConfigError("train.ablation_horizons: every H must be >= 1")

    def to_dict(self) -> dict:
        def strip(d):
            return {k: strip(v) if isinstance(v, dict) else v for k, v in d.items() if v is not None}
        return strip(dataclasses.asdict(self))

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())


_SECTIONS = {"data": DataSection, "model": ModelSection, "train": TrainSection,
             "detect": DetectSection, "metrics": MetricsSection}


_NUMBER = (int, float)


def _coerce(where: str, tp: Any, value: Any) -> Any:
    base = {Optional[int]: int, Optional[float]: float}.get(tp, tp)
    if base is bool:
        ok = isinstance(value, bool)
    elif base is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif base is float:
        ok = isinstance(value, _NUMBER) and not isinstance(value, bool)
        value = float(value) if ok else value
    else:
        ok = isinstance(value, base)
    if not ok:
        raise ConfigError(f"{where}: expected {base.__name__}, got {value!r}")
    return value


def _fill(cls, section: str, raw: dict):
    obj = cls()
    hints = get_type_hints(cls)
    for key, value in raw.items():
        if key not in hints:
            raise ConfigError(f"unknown key {section}.{key}")
        setattr(obj, key, _coerce(f"{section}.{key}", hints[key], value))
    return obj


def from_dict(raw: dict) -> ExperimentConfig:
    cfg = ExperimentConfig()
    for key, value in raw.items():
        if key == "seed":
            cfg.seed = _coerce("seed", int, value)
        elif key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"[{key}] must be a table")
            setattr(cfg, key, _fill(_SECTIONS[key], key, value))
        else:
            raise ConfigError(f"unknown key {key}")
    cfg.validate()
    return cfg


def apply_overrides(raw: dict, assignments: list[str]) -> dict:
    """Apply ``section.key=value`` strings (value in TOML syntax) to a raw config dict."""
    raw = {k: dict(v) if isinstance(v, dict) else v for k, v in raw.items()}
    for item in assignments:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        path, text = item.split("=", 1)
        try:
            value = tomli.loads(f"v = {text}")["v"]
        except tomli.TOMLDecodeError:
            value = text
        parts = path.strip().split(".")
        if len(parts) == 1:
            raw[parts[0]] = value
        elif len(parts) == 2:
            raw.setdefault(parts[0], {})[parts[1]] = value
        else:
            raise ConfigError(f"override key {path!r} is nested too deeply")
    return raw


def load(path: Optional[str | Path], overrides: list[str] = ()) -> ExperimentConfig:
    raw: dict = {}
    if path is not None:
        try:
            raw = tomli.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return from_dict(apply_overrides(raw, list(overrides)))
