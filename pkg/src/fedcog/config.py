"""Experiment configuration: a nested YAML (or JSON) document, validated on load."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml


class ConfigError(ValueError):
    pass


@dataclass
class DatasetConfig:
    kind: str
    content: str | None = None
    cites: str | None = None
    strict: bool = True
    block_sizes: list = field(default_factory=list)
    p_in: float = 0.0
    p_out: float = 0.0
    feature_dim: int = 0
    num_classes: int | None = None
    feature_scale: float = 1.0
    seed: int = 0
    normalize_features: bool = False


@dataclass
class PartitionConfig:
    method: str
    parts: int
    seed: int = 0
    max_iters: int = 100


@dataclass
class ModelConfig:
    variant: str
    layers: int
    alpha: float = 0.1
    r: float = 0.5
    hidden: list = field(default_factory=list)
    activation: str = "relu"
    weight_seed: int = 0


@dataclass
class TaskConfig:
    kind: str
    per_class: int = 30
    test_size: int = 1000
    train_frac: float = 0.5
    seed: int = 0
    head_hidden: int | None = None


@dataclass
class TrainSection:
    algo: str
    lr: float
    rounds: int
    participation: float = 1.0
    local_epochs: int = 1
    client_lr: float | None = None
    tau: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.99
    alpha: float = 0.01
    seed: int = 0
    lr_grid: list = field(default_factory=list)


@dataclass
class ExperimentConfig:
    dataset: DatasetConfig
    partitioner: PartitionConfig
    lnnc: bool
    model: ModelConfig
    task: TaskConfig
    train: TrainSection
    output: str | None = None
    mode: str = "fedcog"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def override_seed(self, seed: int) -> "ExperimentConfig":
        cfg = from_dict(self.to_dict())
        for section in (cfg.dataset, cfg.partitioner, cfg.task, cfg.train):
            section.seed = seed
        cfg.model.weight_seed = seed
        return cfg


_REQUIRED = {
    "dataset": ("kind",),
    "partitioner": ("method", "parts", "seed"),
    "model": ("variant", "layers"),
    "task": ("kind",),
    "train": ("algo", "lr", "rounds"),
}

_CHOICES = {
    ("dataset", "kind"): {"sbm", "citation"},
    ("partitioner", "method"): {"kmeans", "topological"},
    ("model", "variant"): {"sgc", "gcn", "appnp", "gpr"},
    ("task", "kind"): {"node", "link"},
    ("train", "algo"): {"fedavg", "fedadagrad", "fedadam", "feddyn"},
}


def _section(cls, name: str, raw) -> object:
    if not isinstance(raw, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    for key in _REQUIRED.get(name, ()):
        if key not in raw:
            raise ConfigError(f"missing key {name}.{key}")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown keys in {name}: {sorted(unknown)}")
    for (sec, key), allowed in _CHOICES.items():
        if sec == name and key in raw and raw[key] not in allowed:
            raise ConfigError(f"{name}.{key} must be one of {sorted(allowed)}, got {raw[key]!r}")
    return cls(**raw)


def from_dict(raw: dict, base: Path | None = None) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    for key in ("dataset", "partitioner", "lnnc", "model", "task", "train"):
        if key not in raw:
            raise ConfigError(f"missing section {key!r}")
    extra = set(raw) - {"dataset", "partitioner", "lnnc", "model", "task", "train", "output", "mode"}
    if extra:
        raise ConfigError(f"unknown top-level keys: {sorted(extra)}")
    cfg = ExperimentConfig(
        dataset=_section(DatasetConfig, "dataset", raw["dataset"]),
        partitioner=_section(PartitionConfig, "partitioner", raw["partitioner"]),
        lnnc=bool(raw["lnnc"]),
        model=_section(ModelConfig, "model", raw["model"]),
        task=_section(TaskConfig, "task", raw["task"]),
        train=_section(TrainSection, "train", raw["train"]),
        output=raw.get("output"),
        mode=raw.get("mode", "fedcog"),
    )
    validate(cfg, base)
    return cfg


def validate(cfg: ExperimentConfig, base: Path | None = None) -> None:
    d = cfg.dataset
    if d.kind == "citation":
        for attr in ("content", "cites"):
            path = getattr(d, attr)
            if not path:
                raise ConfigError(f"dataset.{attr} is required for citation data")
            resolved = Path(path) if base is None else base / path
            if not resolved.exists():
                raise ConfigError(f"dataset.{attr}: {resolved} does not exist")
            setattr(d, attr, str(resolved))
    else:
        if not d.block_sizes or d.feature_dim < 1:
            raise ConfigError("sbm datasets need block_sizes and feature_dim")
    if cfg.partitioner.parts < 1:
        raise ConfigError("partitioner.parts must be >= 1")
    if cfg.model.layers < 0:
        raise ConfigError("model.layers must be >= 0")
    if cfg.mode not in {"fedcog", "disconnected", "centralized"}:
        raise ConfigError(f"mode must be fedcog, disconnected or centralized, got {cfg.mode!r}")
    if not 0.0 < cfg.train.participation <= 1.0:
        raise ConfigError("train.participation must lie in (0, 1]")


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    raw = yaml.safe_load(path.read_text())
    return from_dict(raw, base=path.parent)
