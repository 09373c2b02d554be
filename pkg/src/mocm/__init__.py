"""Multi-objective cognitive model for multi-subject supervised fMRI analysis."""

from .engine import (
    Candidate,
    OptimizerConfig,
    OptimizationTrace,
    Termination,
    dominates,
    epsilon_indicator,
    indicator_i1,
    indicator_i2,
    isde,
    non_dominated_partition,
    optimize,
    sort_select,
)
from .config import RunConfig

__version__ = "0.1.0"
