"""Run configuration shared by the command-line tools."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

from .merge import DEFAULT_FRONTIER_CAP
from .planner import EnumConfig
from .rng import DEFAULT_MASTER_SEED
from .scan import DEFAULT_THRESHOLD
from .sketch import SketchConfig


def default_workers() -> int:
    return os.cpu_count() or 1


@dataclass(frozen=True)
class RunConfig:
    master_seed: int = DEFAULT_MASTER_SEED
    sketch: SketchConfig = field(default_factory=SketchConfig)
    enum: EnumConfig = field(default_factory=EnumConfig)
    threshold: int = DEFAULT_THRESHOLD
    frontier_cap: int = DEFAULT_FRONTIER_CAP
    workers: int = field(default_factory=default_workers)
    catalog: str | None = None
    out: str | None = None

    def __post_init__(self):
        if self.master_seed < 0:
            raise ValueError("master seed must be non-negative")
        if self.threshold < 0:
            raise ValueError("threshold must be non-negative")
        if self.frontier_cap < 1:
            raise ValueError("frontier cap must be at least 1")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    def to_json(self) -> dict:
        """Everything that influences results; ``workers`` and paths are excluded."""
        return {
            "master_seed": self.master_seed,
            "sketch": {"rows": self.sketch.rows, "buckets": self.sketch.buckets},
            "enum": self.enum.to_json(),
            "threshold": self.threshold,
            "frontier_cap": self.frontier_cap,
        }

    @classmethod
    def from_json(cls, data: dict, **overrides) -> RunConfig:
        sk = data.get("sketch", {})
        cfg = cls(
            master_seed=data.get("master_seed", DEFAULT_MASTER_SEED),
            sketch=SketchConfig(sk.get("rows", 11), sk.get("buckets", 1024)),
            enum=EnumConfig.from_json(data["enum"]) if "enum" in data else EnumConfig(),
            threshold=data.get("threshold", DEFAULT_THRESHOLD),
            frontier_cap=data.get("frontier_cap", DEFAULT_FRONTIER_CAP),
        )
        return replace(cfg, **overrides)

    @classmethod
    def load(cls, path) -> RunConfig:
        return cls.from_json(json.loads(Path(path).read_text()))
