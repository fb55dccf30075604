"""Projection-accelerated Byzantine-robust federated aggregation.

Robust aggregators that score clients by pairwise distances (Krum, the
Bulyan selection stage, the Weiszfeld geometric median) only need relative
geometry, which random projection preserves. The pipeline therefore
compresses client updates with a seeded sparse projection, computes simplex
reliability weights in the small space, and reconstructs the aggregate from
the original full-dimensional updates.
"""

from .aggregation import (
    AggregatorConfig,
    BulyanSelect,
    GeometricMedian,
    Krum,
    ProjectedAggregator,
    WeightedMean,
    apply_weights,
    bulyan_select_weights,
    compute_weights,
    geometric_median_weights,
    krum_weights,
    mean_weights,
)
from .attacks import AttackConfig, craft
from .config import ConfigError, ExperimentConfig, load_config
from .engine import (
    DivergenceError,
    RoundRecord,
    RoundState,
    TrainingSummary,
    run_round,
    run_training,
)
from .harness import run_benchmark, run_experiment, run_sweep
from .objectives import (
    NonconvexToyTask,
    QuadraticTask,
    TaskSpec,
    build_task,
    lr_schedule,
)
from .projection import (
    GaussianProjection,
    ProjectionSpec,
    RandomProjector,
    SparseProjection,
    build_projection,
    min_projection_dim,
    sparse_nonzero_count,
)
from .seeding import derive_seed, generator

__version__ = "0.1.0"

__all__ = [
    "AggregatorConfig", "AttackConfig", "BulyanSelect", "ConfigError",
    "DivergenceError", "ExperimentConfig", "GaussianProjection",
    "GeometricMedian", "Krum", "NonconvexToyTask", "ProjectedAggregator",
    "ProjectionSpec", "QuadraticTask", "RandomProjector", "RoundRecord",
    "RoundState", "SparseProjection", "TaskSpec", "TrainingSummary",
    "WeightedMean", "apply_weights", "build_projection", "build_task",
    "bulyan_select_weights", "compute_weights", "craft", "derive_seed",
    "generator", "geometric_median_weights", "krum_weights", "load_config",
    "lr_schedule", "mean_weights", "min_projection_dim", "run_benchmark",
    "run_experiment", "run_round", "run_sweep", "run_training",
    "sparse_nonzero_count",
]
