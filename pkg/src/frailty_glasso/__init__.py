"""Group-penalized variable selection for the Cox proportional hazards
model with shared gamma frailty: profiled step-function baseline hazard,
block coordinate gradient descent, cross-validated tuning, a clustered
survival-data simulator, and a penalty-comparison benchmark."""

from .data import (BaselineHazard, Cluster, GroupStructure, ModelParams,
                   Observation, SurvivalDataset, break_ties,
                   pooled_event_times, validate_dataset)
from .likelihood import (LikelihoodContext, alpha_loglik, beta_loglik,
                         eval_cumhaz, grad_beta, marginal_loglik, rho_residual,
                         rho_sweep, solve_rho)
from .metrics import (SelectionConfusion, estimation_error, pseudo_r2,
                      selection_metrics)
from .optimizer import (DEFAULT_ALPHA_GRID, ArmijoConfig, FitConfig, FitResult,
                        alpha_grid_search, bcgd_minimize_beta, fit, fit_null,
                        kkt_residuals, objective)
from .penalty import (PenaltyKind, PenaltySpec, lambda_max, penalty_value,
                      prox_group, prox_group_penalty)
from .simulate import (BenchmarkSummary, BenchRow, SimConfig, SimTruth,
                       default_beta, run_benchmark, simulate_dataset)
from .tuning import (CVResult, PathResult, assign_folds, kfold_cv,
                     make_lambda_grid, solution_path)

__all__ = [
    "ArmijoConfig", "BaselineHazard", "BenchRow", "BenchmarkSummary",
    "CVResult", "Cluster", "DEFAULT_ALPHA_GRID", "FitConfig", "FitResult",
    "GroupStructure", "LikelihoodContext", "ModelParams", "Observation",
    "PathResult", "PenaltyKind", "PenaltySpec", "SelectionConfusion",
    "SimConfig", "SimTruth", "SurvivalDataset", "alpha_grid_search",
    "alpha_loglik", "assign_folds", "bcgd_minimize_beta", "beta_loglik",
    "break_ties", "default_beta", "estimation_error", "eval_cumhaz", "fit",
    "fit_null", "grad_beta", "kfold_cv", "kkt_residuals", "lambda_max",
    "make_lambda_grid", "marginal_loglik", "objective", "penalty_value",
    "pooled_event_times", "prox_group", "prox_group_penalty", "pseudo_r2",
    "rho_residual", "rho_sweep", "run_benchmark", "selection_metrics",
    "simulate_dataset", "solution_path", "solve_rho", "validate_dataset",
]

__version__ = "0.1.0"
