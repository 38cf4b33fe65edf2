"""Derivative-free optimization with Gaussian search distributions under KL trust regions.

The main entry points are :class:`MoreOptimizer` (ask/tell), :func:`run` and
:func:`run_with_restarts`, configured through :class:`OptimizerConfig`.
"""

from .benchmarks import BenchmarkSpec, evaluate, make
from .entropy import BaselineEntropyConfig
from .errors import (
    CasMoreError,
    DegenerateTargetsError,
    DimensionMismatchError,
    FactorizationError,
    FitError,
    OracleError,
    SolverError,
)
from .gaussian import GaussianSearchDist, entropy, kl_divergence
from .harness import ExperimentConfig, run_experiment
from .optimizer import (
    IterationRecord,
    MoreOptimizer,
    OptimizerConfig,
    RestartResult,
    RunResult,
    StopCondition,
    run,
    run_with_restarts,
)
from .surrogate import NormalizationConfig, QuadraticSurrogate
from .trust_region import solve_cov_update, solve_joint_more_update, solve_mean_update

__version__ = "0.1.0"

__all__ = [
    "BaselineEntropyConfig",
    "BenchmarkSpec",
    "CasMoreError",
    "DegenerateTargetsError",
    "DimensionMismatchError",
    "ExperimentConfig",
    "FactorizationError",
    "FitError",
    "GaussianSearchDist",
    "IterationRecord",
    "MoreOptimizer",
    "NormalizationConfig",
    "OptimizerConfig",
    "OracleError",
    "QuadraticSurrogate",
    "RestartResult",
    "RunResult",
    "SolverError",
    "StopCondition",
    "entropy",
    "evaluate",
    "kl_divergence",
    "make",
    "run",
    "run_experiment",
    "run_with_restarts",
    "solve_cov_update",
    "solve_joint_more_update",
    "solve_mean_update",
]
