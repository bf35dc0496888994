"""Minimax observation of linear systems with periodic boundary conditions."""
from .adversary import BoundCheck, guaranteed_bound_check
from .bvp import BvpSolution, PeriodicLinearSystem, PeriodicSolver, kernel_dimension, solve_periodic
from .config import ConfigError, ExperimentConfig
from .expr import ExprDomainError, ExprSyntaxError, evaluate, parse, to_string
from .linalg import nullspace_basis, pinv, solve_min_norm, svd
from .observer import (
    FeasibilityReport,
    IncompatibleProblem,
    MinimaxEstimate,
    NoiseModel,
    NumericalConsistencyError,
    ObservabilityReport,
    ObservationSystem,
    StateEstimate,
    check_feasibility,
    compute_h,
    compute_P,
    compute_W,
    feasibility_oracle,
    observability_diagnostic,
    simulate_observation,
    solve_estimator,
    solve_reconstruction,
)
from .ode import DivergenceError, Grid, TimeMatrix, TimeVector, Trajectory

__all__ = [
    "BoundCheck",
    "BvpSolution",
    "ConfigError",
    "DivergenceError",
    "ExperimentConfig",
    "ExprDomainError",
    "ExprSyntaxError",
    "FeasibilityReport",
    "Grid",
    "IncompatibleProblem",
    "MinimaxEstimate",
    "NoiseModel",
    "NumericalConsistencyError",
    "ObservabilityReport",
    "ObservationSystem",
    "PeriodicLinearSystem",
    "PeriodicSolver",
    "StateEstimate",
    "TimeMatrix",
    "TimeVector",
    "Trajectory",
    "check_feasibility",
    "compute_P",
    "compute_W",
    "compute_h",
    "evaluate",
    "feasibility_oracle",
    "guaranteed_bound_check",
    "kernel_dimension",
    "nullspace_basis",
    "observability_diagnostic",
    "parse",
    "pinv",
    "simulate_observation",
    "solve_estimator",
    "solve_min_norm",
    "solve_periodic",
    "solve_reconstruction",
    "svd",
    "to_string",
]
