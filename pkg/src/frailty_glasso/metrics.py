"""Evaluation measures: likelihood-ratio pseudo R-squared, group-level
selection accuracy, and coefficient estimation error."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import GroupStructure
from .errors import DimensionMismatch, InvalidLoglikPair


@dataclass(frozen=True)
class SelectionConfusion:
    """Covariate-group-level confusion counts; tp+fp+tn+fn = K."""

    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def pseudo_r2(loglik_fit: float, loglik_null: float, m: int) -> float:
    """Likelihood-ratio (Cox-Snell) R^2 on m observations, clamped to [0, 1).

    The null log-likelihood comes from a beta = 0 model with the frailty
    parameter and hazard re-profiled, so the value isolates beta's
    contribution.
    """
    if loglik_fit < loglik_null - 1e-8:
        raise InvalidLoglikPair(
            f"fitted loglik {loglik_fit} is worse than null {loglik_null}")
    val = 1.0 - math.exp(2.0 * (loglik_null - loglik_fit) / m)
    return min(max(val, 0.0), math.nextafter(1.0, 0.0))


def selection_metrics(beta_hat: np.ndarray, true_active: set[int],
                      groups: GroupStructure) -> SelectionConfusion:
    """Count selected vs truly-active covariate groups.

    A group is selected iff its coefficient block has positive norm.
    """
    beta_hat = np.asarray(beta_hat, dtype=float)
    if beta_hat.shape != (groups.p,):
        raise DimensionMismatch(
            f"beta has length {beta_hat.shape}, expected {groups.p}")
    true_active = set(int(j) for j in true_active)
    tp = fp = tn = fn = 0
    for j, g in enumerate(groups.groups):
        selected = float(np.linalg.norm(beta_hat[list(g)])) > 0.0
        if selected and j in true_active:
            tp += 1
        elif selected:
            fp += 1
        elif j in true_active:
            fn += 1
        else:
            tn += 1
    return SelectionConfusion(tp=tp, fp=fp, tn=tn, fn=fn)


def estimation_error(beta_hat: np.ndarray, beta_true: np.ndarray) -> float:
    """Euclidean distance between estimated and true coefficients."""
    beta_hat = np.asarray(beta_hat, dtype=float)
    beta_true = np.asarray(beta_true, dtype=float)
    if beta_hat.shape != beta_true.shape:
        raise DimensionMismatch(
            f"shape mismatch: {beta_hat.shape} vs {beta_true.shape}")
    return float(np.linalg.norm(beta_hat - beta_true))
