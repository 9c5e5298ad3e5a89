"""Experiment configuration: dataclasses loaded from a versioned TOML file."""
from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .defense import DefenseParam, GateConfig

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass
class DataSpec:
    kind: str = "blobs"  # "blobs" or "tensors"
    path: str = ""  # tensor directory when kind == "tensors"
    n_classes: int = 4
    dim: int = 16
    shape: list[int] | None = None
    radius: float = 0.25
    spread: float = 0.07
    train_per_class: int = 200
    val_per_class: int = 100
    test_per_class: int = 100


@dataclass
class ModelSpec:
    hidden: list[int] = field(default_factory=lambda: [32])
    epochs: int = 20
    lr: float = 0.1
    batch_size: int = 32
    checkpoint: str = ""  # load instead of training when set


@dataclass
class AttackSpec:
    kind: str = "hsja"
    budget: int = 2000
    epsilon: float | str = "auto"
    n_samples: int = 50
    repeats: int = 1


@dataclass
class DefenseSpec:
    kind: str = "RND"
    nu: list[float] = field(default_factory=lambda: [0.05, 0.1, 0.2])
    tau: list[float] = field(default_factory=lambda: [0.0, 0.5, 0.8, 1.0])


@dataclass
class ExperimentConfig:
    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    out: str = "runs/default"
    workers: int = 1
    data: DataSpec = field(default_factory=DataSpec)
    model: ModelSpec = field(default_factory=ModelSpec)
    attack: AttackSpec = field(default_factory=AttackSpec)
    defense: DefenseSpec = field(default_factory=DefenseSpec)

    def validate(self) -> "ExperimentConfig":
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}; expected {SCHEMA_VERSION}")
        if not self.defense.nu or not self.defense.tau:
            raise ConfigError("nu and tau grids must be nonempty")
        try:
            for nu in self.defense.nu:
                DefenseParam(self.defense.kind, nu)
            for tau in self.defense.tau:
                GateConfig(tau)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.attack.kind not in ("hsja", "surfree"):
            raise ConfigError(f"unknown attack kind {self.attack.kind!r}")
        if self.attack.budget < 1 or self.attack.n_samples < 1 or self.attack.repeats < 1:
            raise ConfigError("budget, n_samples and repeats must be positive")
        eps = self.attack.epsilon
        if not (eps == "auto" or (isinstance(eps, (int, float)) and eps > 0)):
            raise ConfigError(f"epsilon must be positive or 'auto', got {eps!r}")
        if self.data.kind == "tensors":
            if not Path(self.data.path).is_dir():
                raise ConfigError(f"dataset directory {self.data.path!r} does not exist")
        elif self.data.kind == "blobs":
            if self.attack.n_samples > self.data.n_classes * self.data.test_per_class:
                raise ConfigError("n_samples exceeds the test split size")
        else:
            raise ConfigError(f"unknown data kind {self.data.kind!r}")
        if self.model.checkpoint and not Path(self.model.checkpoint).with_suffix(".json").exists():
            raise ConfigError(f"checkpoint {self.model.checkpoint!r} does not exist")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        """Hash of everything that affects results (output dir and workers excluded)."""
        d = self.to_dict()
        d.pop("out")
        d.pop("workers")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def _build(cls, raw: dict, where: str):
    known = {f.name: f for f in fields(cls)}
    unknown = set(raw) - set(known)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where or 'top level'}]: {', '.join(sorted(unknown))}")
    kwargs = {}
    for name, value in raw.items():
        default = getattr(cls(), name)
        if is_dataclass(default):
            if not isinstance(value, dict):
                raise ConfigError(f"[{name}] must be a table")
            kwargs[name] = _build(type(default), value, name)
        else:
            kwargs[name] = value
    return cls(**kwargs)


def config_from_dict(raw: dict) -> ExperimentConfig:
    return _build(ExperimentConfig, raw, "").validate()


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    try:
        raw = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(raw)
