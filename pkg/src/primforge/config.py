"""Pipeline configuration with flag > file > default precedence."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .primitives import PRIMITIVE_SETS


@dataclass(frozen=True)
class PipelineConfig:
    resolution: int = 100
    alpha: float = 0.6
    min_voxels: int = 5
    truncation_factor: float = 1.2
    tess: int = 100
    max_primitives: int = 100
    primitive_set: str = "full"
    seed: int = 0
    accept_residual: float = 1e-2
    accept_coverage: float = 0.3

    def __post_init__(self):
        for name in ("resolution", "min_voxels", "tess", "max_primitives"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value <= 0:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        for name in ("truncation_factor", "accept_residual"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0.0 <= self.accept_coverage <= 1.0:
            raise ValueError("accept_coverage must lie in [0, 1]")
        if self.tess < 4:
            raise ValueError("tess must be >= 4")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.primitive_set not in PRIMITIVE_SETS:
            raise ValueError(f"primitive_set must be one of {sorted(PRIMITIVE_SETS)}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def field_names(cls) -> tuple:
        return tuple(f.name for f in fields(cls))

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        unknown = set(data) - set(cls.field_names())
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**data)

    @classmethod
    def resolve(cls, overrides: dict | None = None, path=None) -> "PipelineConfig":
        """Defaults, then the JSON file at ``path``, then non-None ``overrides``."""
        merged = {}
        if path is not None:
            data = json.loads(Path(path).read_text())
            if not isinstance(data, dict):
                raise ValueError("config file must hold a JSON object")
            merged.update(data)
        merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls.from_dict(merged)
