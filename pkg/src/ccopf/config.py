"""Declarative run configuration shared by the CLI and the experiment harness.

All randomness flows from the config seed list; defaults mirror the
reference experiment setup (10,000 samples, 80/20 split, epsilon 0.05,
PWL tolerance 0.002, 10 EM restarts).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .grid import GridCase, builtin_case_path, load_case

__all__ = ["DatasetSpec", "RunConfig"]

_DATASET_KINDS = ("synthetic-G", "synthetic-C", "csv")


@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "synthetic-G"
    n_samples: int = 10_000
    mu: float = -0.024      # per-unit Gaussian location
    sigma: float = 0.036    # per-unit Gaussian scale
    x0: float = 0.0         # per-unit Cauchy location
    gamma: float = 0.02     # per-unit Cauchy scale
    path: str | None = None  # CSV datasets
    normalize: bool = False

    def __post_init__(self):
        if self.kind not in _DATASET_KINDS:
            raise ValueError(f"dataset kind must be one of {_DATASET_KINDS}")
        if self.kind == "csv" and not self.path:
            raise ValueError("csv datasets need a path")


@dataclass(frozen=True)
class RunConfig:
    case: str = "builtin:case14"
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    approach: str = "constraint-informed"
    distribution: str = "gmm"
    k: int = 3
    epsilon: float = 0.05
    pwl_delta: float = 0.002
    restarts: int = 10
    seeds: tuple[int, ...] = tuple(range(10))
    train_fraction: float = 0.8
    zero_mean: bool = False
    classical_structure: str = "spherical"  # keeps the K > 1 line rows convex
    output_dir: str = "out"

    def __post_init__(self):
        if not 0.0 < self.epsilon < 0.5:
            raise ValueError("epsilon must lie in (0, 0.5)")
        if not 0.0 < self.pwl_delta < 0.5:
            raise ValueError("pwl_delta must lie in (0, 0.5)")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.distribution == "gaussian" and self.k != 1:
            raise ValueError("gaussian distribution implies k = 1")
        if not self.seeds:
            raise ValueError("at least one seed is required")

    def load_case(self) -> GridCase:
        if self.case.startswith("builtin:"):
            return load_case(builtin_case_path(self.case.split(":", 1)[1]))
        p = Path(self.case)
        if not p.exists():
            raise FileNotFoundError(f"case file {p} does not exist")
        return load_case(p)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        if "dataset" in d and isinstance(d["dataset"], dict):
            d["dataset"] = DatasetSpec(**d["dataset"])
        if "seeds" in d:
            d["seeds"] = tuple(int(s) for s in d["seeds"])
        return cls(**d)

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def with_overrides(self, **kwargs) -> "RunConfig":
        ds_keys = {k: v for k, v in kwargs.items() if k in DatasetSpec.__dataclass_fields__}
        top = {k: v for k, v in kwargs.items() if k in RunConfig.__dataclass_fields__}
        cfg = replace(self, **top) if top else self
        if ds_keys:
            cfg = replace(cfg, dataset=replace(cfg.dataset, **ds_keys))
        return cfg

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))
