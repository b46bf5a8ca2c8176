"""Cover-tree-accelerated exact k-means with instrumented baselines."""

from .core import (
    Dataset,
    DatasetFormatError,
    DistanceCounter,
    counted_distance,
    distance,
    load_dataset,
)
from .covertree import (
    CoverTree,
    CoverTreeNode,
    TreeConfig,
    aggregate,
    build,
    check_invariants,
    child_point_bounds,
    node_point_bounds,
)

__all__ = [
    "Dataset",
    "DatasetFormatError",
    "DistanceCounter",
    "distance",
    "counted_distance",
    "load_dataset",
    "TreeConfig",
    "CoverTree",
    "CoverTreeNode",
    "build",
    "aggregate",
    "node_point_bounds",
    "child_point_bounds",
    "check_invariants",
]
