"""COMPASS: join ordering driven by Fast-AGMS sketches built during selection push-down."""

from .errors import (
    CatalogError,
    CompassError,
    EstimationError,
    GuardExceeded,
    QuerySpecError,
    SketchMismatchError,
)
from .merge import merge_entry, merged_estimate
from .planner import EnumConfig, JoinGraph, QuerySpec, SketchEstimator, enumerate_plans
from .scan import scan
from .sketch import (
    AgmsSketch,
    FastAgmsSketch,
    PartitionedSketch,
    SketchConfig,
    agms_estimate,
    fa_two_way_estimate,
    part_estimate,
)

__version__ = "0.1.0"

__all__ = [
    "AgmsSketch",
    "CatalogError",
    "CompassError",
    "EnumConfig",
    "EstimationError",
    "FastAgmsSketch",
    "GuardExceeded",
    "JoinGraph",
    "PartitionedSketch",
    "QuerySpec",
    "QuerySpecError",
    "SketchConfig",
    "SketchEstimator",
    "SketchMismatchError",
    "agms_estimate",
    "enumerate_plans",
    "fa_two_way_estimate",
    "merge_entry",
    "merged_estimate",
    "part_estimate",
    "scan",
]
