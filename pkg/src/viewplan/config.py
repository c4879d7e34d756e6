"""Experiment configuration and per-stage seed derivation."""

from __future__ import annotations

import json
import zlib
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

CONFIG_ENV = "VIEWPLAN_CONFIG"


def _default_budgets() -> list:
    return [round(0.1 * i, 1) for i in range(0, 31)]


@dataclass
class Config:
    n_views: int = 32
    radius: float = 0.4
    grid_res: float = 0.005
    spacing: float = 0.002
    alpha: int = 10
    lam: float = 1.25
    D: int = 32
    seed: int = 0
    object_size: tuple = (0.05, 0.15)
    refiner: dict = field(default_factory=lambda: {"kind": "oracle_dilation", "dilation_radius": 0.01})
    budgets: list = field(default_factory=_default_budgets)
    viewspace_iterations: int = 1500
    max_k: Optional[int] = None
    extra_samples: int = 32
    epochs: int = 100
    lr: float = 0.05
    hidden: int = 64
    batch_size: int = 16
    solver_time_limit: Optional[float] = 60.0
    cd_samples: int = 10240
    emd_samples: int = 512
    dcd_temperature: float = 1000.0
    max_range: float = 1.0

    def __post_init__(self):
        self.object_size = tuple(float(v) for v in self.object_size)
        self.budgets = [float(b) for b in self.budgets]
        self.validate()

    def validate(self) -> None:
        positive = ("n_views", "radius", "grid_res", "spacing", "alpha", "lam", "D", "viewspace_iterations",
                    "epochs", "lr", "hidden", "batch_size", "cd_samples", "emd_samples", "dcd_temperature", "max_range")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"config field {name} must be positive, got {getattr(self, name)!r}")
        if self.n_views < 2:
            raise ValueError(f"n_views must be at least 2, got {self.n_views}")
        if len(self.object_size) != 2 or not 0 < self.object_size[0] <= self.object_size[1]:
            raise ValueError(f"object_size must be (min, max) with 0 < min <= max, got {self.object_size}")
        if self.max_k is not None and not 1 <= self.max_k <= self.n_views:
            raise ValueError(f"max_k must lie in [1, n_views], got {self.max_k}")
        if self.extra_samples < 0:
            raise ValueError("extra_samples must be non-negative")
        if any(b < 0 for b in self.budgets) or self.budgets != sorted(self.budgets):
            raise ValueError("budgets must be non-negative and sorted ascending")
        if self.solver_time_limit is not None and not self.solver_time_limit > 0:
            raise ValueError("solver_time_limit must be positive or null")

    @property
    def half_extent(self) -> float:
        return 0.5 * self.object_size[1]

    @property
    def tail_max_k(self) -> int:
        return self.max_k if self.max_k is not None else max(1, self.n_views // 2)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["object_size"] = list(self.object_size)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Config":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d)

    def updated(self, **overrides) -> "Config":
        d = self.to_dict()
        d.update({k: v for k, v in overrides.items() if v is not None})
        return Config.from_dict(d)


def load_config(path=None) -> Config:
    if path is None:
        return Config()
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ValueError(f"{path}: invalid JSON ({e})") from None
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return Config.from_dict(data)


def stage_seed(master: int, label: str) -> int:
    """Independent 32-bit seed for one named stage of a run."""
    ss = np.random.SeedSequence([int(master) & 0xFFFFFFFF, zlib.crc32(label.encode())])
    return int(ss.generate_state(1)[0])
