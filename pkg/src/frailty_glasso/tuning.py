"""Regularization-path construction and k-fold cross-validation.

Folds split at the cluster level so the held-out likelihood stays a
proper likelihood of whole frailty-sharing units.  Held-out scoring
freezes the trained (beta, alpha) and re-profiles the hazard jumps on
the test fold to a tight fixed point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import ModelParams, SurvivalDataset, validate_dataset
from .errors import (ConfigError, FoldWithoutEvents, FrailtyGlassoError,
                     NumericalError)
from .likelihood import LikelihoodContext, marginal_loglik, solve_rho
from .optimizer import FitConfig, FitResult, _fit_problem, _Problem
from .penalty import PenaltySpec, lambda_max


@dataclass(frozen=True)
class PathResult:
    lambdas: tuple[float, ...]
    fits: tuple[FitResult | None, ...]  # None where a fit failed
    active_counts: tuple[int | None, ...]
    failures: tuple[str, ...]           # messages, aligned with None fits


@dataclass(frozen=True)
class CVResult:
    lambdas: tuple[float, ...]
    cve: tuple[float, ...]
    lambda_opt: float
    opt_index: int
    fold_assignment: dict[str, int]


def make_lambda_grid(lmax: float, n_points: int, ratio: float) -> np.ndarray:
    """n_points log-spaced values from lmax down to ratio * lmax."""
    if not lmax > 0:
        raise ConfigError(f"lambda grid endpoint must be positive, got {lmax}")
    if n_points < 2:
        raise ConfigError(f"lambda grid needs >= 2 points, got {n_points}")
    if not 0 < ratio < 1:
        raise ConfigError(f"grid ratio must lie in (0,1), got {ratio}")
    return np.geomspace(lmax, ratio * lmax, n_points)


def solution_path(data: SurvivalDataset, spec: PenaltySpec,
                  cfg: FitConfig, grid) -> PathResult:
    """Fit at each lambda in decreasing order, warm-starting each fit."""
    data = validate_dataset(data)
    grid = np.asarray(grid, dtype=float)
    if not np.all(np.diff(grid) < 0):
        raise ConfigError("lambda grid must be strictly decreasing")
    prob = _Problem(data, cfg)
    warm = None
    fits: list[FitResult | None] = []
    counts: list[int | None] = []
    failures: list[str] = []
    for lam in grid:
        try:
            result, warm = _fit_problem(prob, spec.with_lambda(float(lam)),
                                        cfg, warm=warm)
        except NumericalError as exc:  # mark and continue with the old warm
            fits.append(None)
            counts.append(None)
            failures.append(f"lambda={lam!r}: {exc}")
            continue
        fits.append(result)
        counts.append(len(result.active_groups))
    return PathResult(lambdas=tuple(float(x) for x in grid), fits=tuple(fits),
                      active_counts=tuple(counts), failures=tuple(failures))


def assign_folds(data: SurvivalDataset, k: int, seed: int,
                 max_attempts: int = 20) -> np.ndarray:
    """Shuffle clusters into k near-equal folds, each containing >= 1 event.

    Re-randomizes up to ``max_attempts`` times before giving up.
    """
    n = data.n_clusters
    if k < 2:
        raise ConfigError(f"k must be >= 2, got {k}")
    if k > n:
        raise ConfigError(f"k = {k} exceeds the {n} available clusters")
    events = np.array([c.event_count for c in data.clusters])
    rng = np.random.default_rng(seed)
    for _ in range(max_attempts):
        perm = rng.permutation(n)
        folds = np.empty(n, dtype=np.int64)
        for f, chunk in enumerate(np.array_split(perm, k)):
            folds[chunk] = f
        ok = all(
            events[folds == f].sum() >= 1 and events[folds != f].sum() >= 1
            for f in range(k)
        )
        if ok:
            return folds
    raise FoldWithoutEvents(
        f"could not build {k} folds with events in every fold "
        f"after {max_attempts} shuffles")


def _test_fold_loglik(test: SurvivalDataset, beta: np.ndarray,
                      alpha: float) -> float:
    """Held-out marginal loglik with the hazard re-profiled on the fold.

    If the hazard fixed point diverges on the fold (it can, when a badly
    overfit candidate produces linear predictors spanning hundreds of
    log-units), the candidate gets a -inf score: its CVE becomes infinite
    and the lambda is disqualified instead of aborting the whole CV.
    """
    params = ModelParams(beta=beta, alpha=alpha)
    try:
        hazard = solve_rho(params, test, tol=1e-8)
    except NumericalError:
        return -math.inf
    ctx = LikelihoodContext.build(test, hazard)
    return marginal_loglik(params, ctx)


def kfold_cv(data: SurvivalDataset, spec: PenaltySpec, cfg: FitConfig,
             k: int = 10, seed: int = 0, grid=None, n_lambda: int = 50,
             grid_ratio: float = 0.01) -> CVResult:
    """Select lambda by cluster-level k-fold cross-validated likelihood.

    The score at each lambda is minus the summed held-out log-likelihood
    over folds, divided by the total number of clusters; ties resolve
    toward the larger (more parsimonious) lambda.
    """
    data = validate_dataset(data)
    if grid is None:
        lmax = lambda_max(data, alpha0=1.0)
        grid = make_lambda_grid(lmax, n_lambda, grid_ratio)
    grid = np.asarray(grid, dtype=float)
    folds = assign_folds(data, k, seed)
    n_total = data.n_clusters

    scores = np.zeros(len(grid))
    for f in range(k):
        train_idx = np.flatnonzero(folds != f)
        test_idx = np.flatnonzero(folds == f)
        train = data.subset(train_idx)
        test = data.subset(test_idx)
        prob = _Problem(train, cfg)
        warm = None
        for li, lam in enumerate(grid):
            result, warm = _fit_problem(prob, spec.with_lambda(float(lam)),
                                        cfg, warm=warm)
            ll = _test_fold_loglik(test, result.beta_hat, result.alpha_hat)
            scores[li] += -ll / n_total
    if np.isnan(scores).any() or not np.isfinite(scores).any():
        raise FrailtyGlassoError("non-finite cross-validation score")
    opt = int(np.argmin(scores))  # grid decreasing: first min = largest lambda
    assignment = {c.id: int(folds[i]) for i, c in enumerate(data.clusters)}
    return CVResult(lambdas=tuple(float(x) for x in grid),
                    cve=tuple(float(s) for s in scores),
                    lambda_opt=float(grid[opt]), opt_index=opt,
                    fold_assignment=assignment)
