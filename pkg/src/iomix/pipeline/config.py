"""Pipeline configuration, loaded from YAML.

Every key is optional; defaults reproduce the full-scale setup (50000
virtual regions, 10 blocks of 512 units, and so on).  A complete file::

    seed: 0
    workers: 1
    exclude: []                 # pool region ids left out of mixup
    paths:
      pool: pool.csv
      target: target.csv
      output: run
    mixup:
      alpha: 1.0
      k_min: 2
      k_max: 5
      count: 50000
      target_pop15: null        # null: use the target region's pop15
      target_pop15_range: null  # [lower, upper] draws a size per region
    split:
      train: 40000
      test: 10000
      validation_fraction: 0.2
    features:
      n_components: 50
      ratio_basis: pool         # or "region"
    network:
      blocks: 10
      block_width: 512
      l2_lambda: 0.01
      bn_momentum: 0.99
      bn_eps: 1.0e-8
    training:
      lr_min: 1.0e-4
      lr_max: 1.0e-2
      lr_step_size: 50
      lr_decay_gamma: 0.9999
      momentum: 0.9
      batch_size: 32
      max_epochs: 200
      patience: 10
    baselines:
      flq_delta: 0.1
      flq_exponent_mode: printed  # or "delta"
      ras_tolerance: 1.0e-9
      ras_max_iterations: 10000
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

import yaml


@dataclass
class Paths:
    pool: str | None = None
    target: str | None = None
    output: str = "run"


@dataclass
class MixupSettings:
    alpha: float = 1.0
    k_min: int = 2
    k_max: int = 5
    count: int = 50000
    target_pop15: float | None = None
    target_pop15_range: list[float] | None = None


@dataclass
class SplitSettings:
    train: int = 40000
    test: int = 10000
    validation_fraction: float = 0.2


@dataclass
class FeatureSettings:
    n_components: int = 50
    ratio_basis: str = "pool"


@dataclass
class NetworkSettings:
    blocks: int = 10
    block_width: int = 512
    l2_lambda: float = 0.01
    bn_momentum: float = 0.99
    bn_eps: float = 1e-8


@dataclass
class TrainingSettings:
    lr_min: float = 1e-4
    lr_max: float = 1e-2
    lr_step_size: int = 50
    lr_decay_gamma: float = 0.9999
    momentum: float = 0.9
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 10


@dataclass
class BaselineSettings:
    flq_delta: float = 0.1
    flq_exponent_mode: str = "printed"
    ras_tolerance: float = 1e-9
    ras_max_iterations: int = 10000


@dataclass
class PipelineConfig:
    paths: Paths = field(default_factory=Paths)
    mixup: MixupSettings = field(default_factory=MixupSettings)
    split: SplitSettings = field(default_factory=SplitSettings)
    features: FeatureSettings = field(default_factory=FeatureSettings)
    network: NetworkSettings = field(default_factory=NetworkSettings)
    training: TrainingSettings = field(default_factory=TrainingSettings)
    baselines: BaselineSettings = field(default_factory=BaselineSettings)
    exclude: list[str] = field(default_factory=list)
    seed: int = 0
    workers: int = 1

    def validate(self) -> "PipelineConfig":
        s = self.split
        if s.train < 1 or s.test < 0 or s.train + s.test > self.mixup.count:
            raise ValueError(
                f"split {s.train}+{s.test} does not fit {self.mixup.count} generated regions"
            )
        if not 0 < s.validation_fraction < 1:
            raise ValueError("validation_fraction must lie in (0, 1)")
        n_val = round(s.train * s.validation_fraction)
        if n_val < 1 or s.train - n_val <= self.features.n_components:
            raise ValueError("training split too small for the validation fraction and PCA size")
        rng = self.mixup.target_pop15_range
        if rng is not None and (len(rng) != 2 or not 0 < rng[0] <= rng[1]):
            raise ValueError("target_pop15_range must be [lower, upper] with 0 < lower <= upper")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        """Hash of every setting that affects trained models (paths and
        worker count excluded)."""
        d = self.to_dict()
        d.pop("paths")
        d.pop("workers")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data: dict | None) -> "PipelineConfig":
        return _build(cls, data or {}, "config").validate()

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(yaml.safe_load(fh))

    def dump(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=False)


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ValueError(f"{where}: expected a mapping, got {type(data).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ValueError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {}
    defaults = cls()
    for name, value in data.items():
        default = getattr(defaults, name)
        if is_dataclass(default):
            kwargs[name] = _build(type(default), value or {}, f"{where}.{name}")
        else:
            kwargs[name] = value
    return cls(**kwargs)
