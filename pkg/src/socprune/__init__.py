"""Sparse second-order cone pruning of prediction ensembles."""

from .conic import (
    Cone,
    ConeProgram,
    ConicSolution,
    NONNEG_ORTHANT,
    ProgramBuilder,
    QUADRATIC,
    ROTATED_QUADRATIC,
    build_pruning_socp,
    qp_to_socp,
    read_cone_program,
    write_cone_program,
)
from .core import (
    LabelVector,
    PredictionTensor,
    SplitSpec,
    WeightVector,
    seeded_rng,
    validate_tensor,
    validate_weights,
)
from .io import (
    read_predictions,
    read_report,
    read_summary,
    write_predictions,
    write_report,
)
from .loss import (
    LossValue,
    QuadraticSurrogate,
    build_surrogate,
    distribution_entropy,
    ensemble_prediction,
    entropy_term,
    exact_loss,
)
from .pipeline import (
    CellDiagnostic,
    PruneConfig,
    PruneReport,
    SyntheticSpec,
    VOTE_MAJORITY,
    VOTE_WEIGHTED,
    accuracy,
    auto_threshold,
    brute_force_subset_oracle,
    cross_validate,
    fit_weights,
    generate_synthetic_ensemble,
    prune_by_threshold,
    run_pipeline,
    vote,
)
from .solver import (
    STATUS_INFEASIBLE,
    STATUS_MAX_ITERS,
    STATUS_OPTIMAL,
    STATUS_UNBOUNDED,
    SolverSettings,
    kkt_residuals,
    solve,
)

__all__ = [
    "Cone",
    "ConeProgram",
    "ConicSolution",
    "NONNEG_ORTHANT",
    "ProgramBuilder",
    "QUADRATIC",
    "ROTATED_QUADRATIC",
    "build_pruning_socp",
    "qp_to_socp",
    "read_cone_program",
    "write_cone_program",
    "LabelVector",
    "PredictionTensor",
    "SplitSpec",
    "WeightVector",
    "seeded_rng",
    "validate_tensor",
    "validate_weights",
    "read_predictions",
    "read_report",
    "read_summary",
    "write_predictions",
    "write_report",
    "LossValue",
    "QuadraticSurrogate",
    "build_surrogate",
    "distribution_entropy",
    "ensemble_prediction",
    "entropy_term",
    "exact_loss",
    "CellDiagnostic",
    "PruneConfig",
    "PruneReport",
    "SyntheticSpec",
    "VOTE_MAJORITY",
    "VOTE_WEIGHTED",
    "accuracy",
    "auto_threshold",
    "brute_force_subset_oracle",
    "cross_validate",
    "fit_weights",
    "generate_synthetic_ensemble",
    "prune_by_threshold",
    "run_pipeline",
    "vote",
    "STATUS_INFEASIBLE",
    "STATUS_MAX_ITERS",
    "STATUS_OPTIMAL",
    "STATUS_UNBOUNDED",
    "SolverSettings",
    "kkt_residuals",
    "solve",
]

__version__ = "0.1.0"
