"""Penalized fitting: block coordinate gradient descent with Armijo
backtracking for beta, grid search for the frailty parameter, and a
one-sweep hazard profile step, alternated until the penalized marginal
log-likelihood stabilizes.

Covariates are standardized internally (column mean 0, sd 1) and the
returned coefficients and hazard jumps are transformed back to the
original scale, so penalization is invariant to covariate units.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import (BaselineHazard, DatasetArrays, ModelParams,
                   SurvivalDataset, standardize_columns, validate_dataset)
from .errors import LineSearchFailed, NoEvents, NonFiniteResult
from .likelihood import (LikelihoodContext, _beta_loglik_arrays,
                         _cumhaz_from_pos, _denominator_terms,
                         _marginal_loglik_arrays, _rho_sweep_arrays,
                         _segment_starts)
from .penalty import (PenaltyKind, PenaltySpec, group_penalty_scalar,
                      penalty_value, prox_group_penalty)
from . import _kernels

DEFAULT_ALPHA_GRID: tuple[float, ...] = tuple(np.geomspace(0.05, 20.0, 20))

# Compiled inner loops are used when available; flip this off to force the
# pure-numpy reference path (tests compare the two).
USE_KERNELS = _kernels.HAVE_NUMBA

_KIND_CODES = {PenaltyKind.GROUP_LASSO: _kernels.KIND_GLASSO,
               PenaltyKind.GROUP_SCAD: _kernels.KIND_SCAD,
               PenaltyKind.GROUP_MCP: _kernels.KIND_MCP}


def _kernel_penalty_args(spec: PenaltySpec) -> tuple[int, float]:
    kind = _KIND_CODES[spec.kind]
    if kind == _kernels.KIND_SCAD:
        return kind, spec.gamma_scad
    return kind, spec.gamma_mcp


@dataclass(frozen=True)
class ArmijoConfig:
    """Backtracking line-search settings for the block gradient step."""

    initial_step: float = 1.0
    shrink: float = 0.5
    sufficient_decrease: float = 0.1

    def __post_init__(self):
        assert self.initial_step > 0
        assert 0 < self.shrink < 1
        assert 0 < self.sufficient_decrease < 1


@dataclass(frozen=True)
class FitConfig:
    alpha_grid: tuple[float, ...] = DEFAULT_ALPHA_GRID
    outer_tol: float = 1e-6
    max_outer: int = 200
    max_bcgd: int = 50
    armijo: ArmijoConfig = field(default_factory=ArmijoConfig)
    standardize: bool = True

    def __post_init__(self):
        grid = tuple(float(a) for a in self.alpha_grid)
        if not grid or any(a <= 0 for a in grid):
            raise ValueError("alpha_grid must be non-empty and positive")
        object.__setattr__(self, "alpha_grid", tuple(sorted(grid)))
        if not (self.outer_tol > 0 and self.max_outer >= 1 and self.max_bcgd >= 1):
            raise ValueError("tolerances and iteration caps must be positive")


@dataclass(frozen=True)
class FitResult:
    beta_hat: np.ndarray
    alpha_hat: float
    hazard_hat: BaselineHazard
    objective_trace: tuple[float, ...]
    n_outer: int
    converged: bool
    active_groups: tuple[int, ...]


@dataclass
class WarmState:
    """Internal (standardized-scale) state carried between path fits."""

    beta: np.ndarray
    alpha: float
    rho: np.ndarray


class _Problem:
    """Prepared, standardized arrays for repeated fits on one dataset."""

    def __init__(self, data: SurvivalDataset, cfg: FitConfig):
        self.data = data
        self.cfg = cfg
        self.arr = data.to_arrays()
        if self.arr.n_events == 0:
            raise NoEvents()
        if cfg.standardize:
            Xs, self.mu, self.sd = standardize_columns(self.arr.X)
        else:
            Xs = self.arr.X
            self.mu = np.zeros(data.p)
            self.sd = np.ones(data.p)
        self.Xs = Xs
        self.groups = [np.asarray(g, dtype=np.int64)
                       for g in data.group_structure.groups]
        self.Xg = [np.ascontiguousarray(Xs[:, g]) for g in self.groups]
        self.n = self.arr.n
        # group-contiguous column layout for the compiled inner loops
        self.perm = (np.concatenate(self.groups) if self.groups
                     else np.empty(0, dtype=np.int64))
        sizes = np.array([len(g) for g in self.groups], dtype=np.int64)
        self.gptr = np.concatenate(([0], np.cumsum(sizes))).astype(np.int64)
        self.Xord = np.ascontiguousarray(Xs[:, self.perm])
        self.XordT = np.ascontiguousarray(self.Xord.T)

    def initial_state(self) -> WarmState:
        return WarmState(beta=np.zeros(self.data.p), alpha=1.0,
                         rho=np.full(self.arr.n_events, 1.0 / self.arr.n_events))

    def to_original(self, state: WarmState) -> tuple[np.ndarray, BaselineHazard]:
        beta = state.beta / self.sd
        # centering shifts the linear predictor by a constant that the
        # profiled hazard absorbs; undo it on the jumps
        jumps = state.rho * math.exp(-float(beta @ self.mu))
        return beta, BaselineHazard(self.arr.event_times, jumps)

    def to_standardized(self, beta_orig: np.ndarray,
                        jumps_orig: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        beta = beta_orig * self.sd
        jumps = jumps_orig * math.exp(float(beta_orig @ self.mu))
        return beta, jumps


def _bcgd_arrays(arr: DatasetArrays, Xg: list[np.ndarray],
                 groups: list[np.ndarray], beta: np.ndarray, lin: np.ndarray,
                 H: np.ndarray, alpha: float, spec: PenaltySpec,
                 cfg: FitConfig) -> tuple[np.ndarray, np.ndarray]:
    """Cycle group-wise proximal gradient steps until blocks stop moving.

    Returns the updated (beta, lin) and whether every block reached its
    proximal fixed point to within tolerance before the cycle cap; never
    increases the penalized objective (each accepted step passes the
    Armijo test).
    """
    n = arr.n
    delta = arr.status.astype(float)
    a_alpha = arr.A + alpha
    beta = beta.copy()
    lin = lin.copy()
    f = -_beta_loglik_arrays(arr, H, lin, alpha) / n
    arm = cfg.armijo
    for _ in range(cfg.max_bcgd):
        max_move = 0.0
        for j, gidx in enumerate(groups):
            _, _, r = _denominator_terms(arr, H, lin, alpha)
            q = a_alpha[arr.cluster_index] * r
            gj = -(Xg[j].T @ (delta - q)) / n
            bj = beta[gidx]
            pj = len(gidx)
            pen_old = group_penalty_scalar(spec, float(np.linalg.norm(bj)), pj)
            step = arm.initial_step
            bn = float(np.linalg.norm(bj))
            for _halving in range(51):
                cand = prox_group_penalty(spec, bj - step * gj, step, pj)
                d = cand - bj
                dn = float(np.linalg.norm(d))
                # a proximal step that barely displaces the block means the
                # block is at its fixed point to within the stopping
                # tolerance; moving would only churn below significance
                if dn <= cfg.outer_tol * (1.0 + bn):
                    break
                pen_new = group_penalty_scalar(
                    spec, float(np.linalg.norm(cand)), pj)
                decrease = float(gj @ d) + pen_new - pen_old
                lin_new = lin + Xg[j] @ d
                f_new = -_beta_loglik_arrays(arr, H, lin_new, alpha) / n
                if (f_new + pen_new
                        <= f + pen_old + arm.sufficient_decrease * decrease
                        + 1e-14 * (abs(f) + 1.0)):
                    beta[gidx] = cand
                    lin = lin_new
                    f = f_new
                    max_move = max(
                        max_move, dn / (1.0 + float(np.linalg.norm(bj))))
                    break
                step *= arm.shrink
            else:
                raise LineSearchFailed(
                    f"no acceptable step for covariate group {j} "
                    f"after 50 halvings")
        if max_move < cfg.outer_tol:
            return beta, lin, True
    return beta, lin, False


def _cluster_log_risk(arr: DatasetArrays, H: np.ndarray,
                      lin: np.ndarray) -> np.ndarray:
    """log S_i = log sum_j H_ij exp(lin_ij), -inf where the sum is zero."""
    with np.errstate(divide="ignore"):
        a = np.where(H > 0, np.log(np.where(H > 0, H, 1.0)) + lin, -np.inf)
    starts = _segment_starts(arr.cluster_index, arr.n)
    amax = np.maximum.reduceat(a, starts) if a.size else np.full(arr.n, -np.inf)
    finite = np.isfinite(amax)
    safe = np.where(finite, amax, 0.0)
    sums = np.bincount(arr.cluster_index, weights=np.exp(a - safe[arr.cluster_index]),
                       minlength=arr.n)
    with np.errstate(divide="ignore"):
        out = np.where(sums > 0, safe + np.log(np.where(sums > 0, sums, 1.0)),
                       -np.inf)
    return np.where(finite, out, -np.inf)


def _alpha_profile_values(arr: DatasetArrays, log_s: np.ndarray,
                          grid: np.ndarray) -> np.ndarray:
    """Frailty log-likelihood component at each grid value (vectorized)."""
    from scipy.special import gammaln

    grid = np.asarray(grid, dtype=float)
    log_grid = np.log(grid)
    # (G, n): log(S_i + alpha_g)
    log_salpha = np.logaddexp(log_s[None, :], log_grid[:, None])
    vals = (arr.n * (grid * log_grid - gammaln(grid))
            + gammaln(arr.A[None, :] + grid[:, None]).sum(axis=1)
            - ((arr.A[None, :] + grid[:, None]) * log_salpha).sum(axis=1))
    return vals


def _alpha_search_arrays(arr: DatasetArrays, H: np.ndarray, lin: np.ndarray,
                         grid) -> float:
    grid = np.asarray(sorted(grid), dtype=float)
    log_s = _cluster_log_risk(arr, H, lin)
    vals = _alpha_profile_values(arr, log_s, grid)
    ok = np.isfinite(vals)
    if not ok.all():
        warnings.warn("skipping alpha grid values with non-finite likelihood")
    if not ok.any():
        raise NonFiniteResult("alpha profile likelihood non-finite on the "
                              "whole grid")
    # argmax returns the first maximizer; the grid is ascending, so ties
    # resolve toward the smaller alpha
    vals = np.where(ok, vals, -np.inf)
    return float(grid[int(np.argmax(vals))])


def alpha_grid_search(beta: np.ndarray, ctx: LikelihoodContext, grid) -> float:
    """Grid value maximizing the frailty likelihood component."""
    arr = ctx.data.to_arrays()
    lin = arr.X @ np.asarray(beta, dtype=float)
    return _alpha_search_arrays(arr, ctx.cumhaz, lin, grid)


def bcgd_minimize_beta(start: ModelParams, ctx: LikelihoodContext,
                       spec: PenaltySpec, cfg: FitConfig = FitConfig()) -> np.ndarray:
    """Minimize the penalized beta objective at fixed hazard and alpha."""
    arr = ctx.data.to_arrays()
    groups = [np.asarray(g, dtype=np.int64)
              for g in ctx.data.group_structure.groups]
    Xg = [np.ascontiguousarray(arr.X[:, g]) for g in groups]
    lin = arr.X @ start.beta
    beta, _, _ = _bcgd_arrays(arr, Xg, groups,
                              np.asarray(start.beta, dtype=float),
                              lin, ctx.cumhaz, start.alpha, spec, cfg)
    return beta


def objective(params: ModelParams, ctx: LikelihoodContext, spec: PenaltySpec,
              n_clusters: int) -> float:
    """Penalized objective: -beta_loglik / n + group penalty."""
    from .likelihood import beta_loglik

    return (-beta_loglik(params, ctx) / n_clusters
            + penalty_value(spec, params.beta, ctx.data.group_structure))


def _fit_loop_kernel(prob: _Problem, spec: PenaltySpec, cfg: FitConfig,
                     state: WarmState) -> tuple[WarmState, list[float], int, bool]:
    """Outer loop on the compiled kernels; same updates as the numpy path."""
    arr = prob.arr
    status_f = np.ascontiguousarray(arr.status, dtype=float)
    cidx = np.ascontiguousarray(arr.cluster_index, dtype=np.int64)
    event_pos = np.ascontiguousarray(arr.event_pos, dtype=np.int64)
    A = np.ascontiguousarray(arr.A, dtype=float)
    grid = np.asarray(cfg.alpha_grid, dtype=float)
    kind, gamma = _kernel_penalty_args(spec)
    arm = cfg.armijo

    beta_ord = np.ascontiguousarray(state.beta[prob.perm], dtype=float)
    alpha = float(state.alpha)
    rho = np.array(state.rho, dtype=float)
    lin = prob.Xord @ beta_ord

    beta_full = np.empty(prob.data.p)
    trace: list[float] = []
    converged = False
    f_prev = None
    n_outer = 0
    for n_outer in range(1, cfg.max_outer + 1):
        err = _kernels.rho_sweep_k(rho, lin, status_f, event_pos, cidx, A,
                                   prob.n, alpha)
        if err:
            from .errors import ZeroDenominator

            raise ZeroDenominator(
                f"empty or degenerate risk set at event time index {err - 1}")
        H = _cumhaz_from_pos(rho, event_pos)
        flag = _kernels.bcgd_pass_k(
            prob.XordT, status_f, cidx, A, H, lin, beta_ord, prob.gptr, alpha,
            prob.n, spec.lam, kind, gamma, arm.initial_step, arm.shrink,
            arm.sufficient_decrease, cfg.outer_tol, cfg.max_bcgd)
        if flag > 0:
            raise LineSearchFailed(
                f"no acceptable step for covariate group {flag - 1} "
                f"after 50 halvings")
        stationary = flag == 0
        gidx = _kernels.alpha_search_k(H, lin, cidx, A, prob.n, grid)
        if gidx < 0:
            raise NonFiniteResult("alpha profile likelihood non-finite on "
                                  "the whole grid")
        alpha = float(grid[gidx])
        beta_full[prob.perm] = beta_ord
        pen = penalty_value(spec, beta_full, prob.data.group_structure)
        f = (-_kernels.marginal_loglik_k(rho, H, lin, status_f, cidx, A,
                                         event_pos, prob.n, alpha) / prob.n
             + pen)
        trace.append(f)
        if f_prev is not None and abs(f_prev - f) <= cfg.outer_tol * (abs(f_prev) + 1e-12):
            # a stable objective stops the loop either way, but convergence
            # is only certified when the final coefficient pass was also
            # stationary; a cap-limited pass can leave blocks short of the
            # KKT conditions even when F has stopped moving
            converged = stationary
            break
        f_prev = f

    beta_full[prob.perm] = beta_ord
    return (WarmState(beta=beta_full.copy(), alpha=alpha, rho=rho),
            trace, n_outer, converged)


def _fit_problem(prob: _Problem, spec: PenaltySpec, cfg: FitConfig,
                 warm: WarmState | None = None) -> tuple[FitResult, WarmState]:
    arr = prob.arr
    state = warm if warm is not None else prob.initial_state()
    if USE_KERNELS:
        final, trace, n_outer, converged = _fit_loop_kernel(prob, spec, cfg,
                                                            state)
        beta, alpha, rho = final.beta, final.alpha, final.rho
    else:
        beta = np.array(state.beta, dtype=float)
        alpha = float(state.alpha)
        rho = np.array(state.rho, dtype=float)
        lin = prob.Xs @ beta

        trace = []
        converged = False
        f_prev = None
        n_outer = 0
        for n_outer in range(1, cfg.max_outer + 1):
            rho = _rho_sweep_arrays(arr, lin, alpha, rho)
            H = _cumhaz_from_pos(rho, arr.event_pos)
            beta, lin, stationary = _bcgd_arrays(arr, prob.Xg, prob.groups,
                                                 beta, lin, H, alpha, spec,
                                                 cfg)
            alpha = _alpha_search_arrays(arr, H, lin, cfg.alpha_grid)
            pen = penalty_value(spec, beta, prob.data.group_structure)
            f = -_marginal_loglik_arrays(arr, rho, H, lin, alpha) / prob.n + pen
            trace.append(f)
            # see the kernel loop: a stable objective stops the loop, but
            # convergence also needs a stationary coefficient pass
            if f_prev is not None and abs(f_prev - f) <= cfg.outer_tol * (abs(f_prev) + 1e-12):
                converged = stationary
                break
            f_prev = f

        final = WarmState(beta=beta, alpha=alpha, rho=rho)
    beta_orig, hazard = prob.to_original(final)
    active = tuple(
        j for j, g in enumerate(prob.groups)
        if float(np.linalg.norm(beta[g])) > 0.0
    )
    result = FitResult(beta_hat=beta_orig, alpha_hat=alpha, hazard_hat=hazard,
                       objective_trace=tuple(trace), n_outer=n_outer,
                       converged=converged, active_groups=active)
    return result, final


def fit(data: SurvivalDataset, spec: PenaltySpec,
        cfg: FitConfig = FitConfig()) -> FitResult:
    """Fit the group-penalized frailty model by alternating profile steps.

    Each outer iteration performs one hazard-jump sweep, a full BCGD pass
    on beta, and a grid update of alpha, stopping when the penalized
    marginal log-likelihood changes by less than ``outer_tol`` (relative).
    """
    data = validate_dataset(data)
    prob = _Problem(data, cfg)
    result, _ = _fit_problem(prob, spec, cfg)
    return result


def fit_null(data: SurvivalDataset, cfg: FitConfig = FitConfig()
             ) -> tuple[ModelParams, BaselineHazard, float]:
    """Profile alpha and the hazard at beta = 0; returns the null loglik."""
    arr = data.to_arrays()
    if arr.n_events == 0:
        raise NoEvents()
    lin = np.zeros(arr.m)
    rho = np.full(arr.n_events, 1.0 / arr.n_events)
    alpha = 1.0
    ll_prev = None
    for _ in range(cfg.max_outer):
        rho = _rho_sweep_arrays(arr, lin, alpha, rho)
        H = _cumhaz_from_pos(rho, arr.event_pos)
        alpha = _alpha_search_arrays(arr, H, lin, cfg.alpha_grid)
        ll = _marginal_loglik_arrays(arr, rho, H, lin, alpha)
        if ll_prev is not None and abs(ll - ll_prev) <= cfg.outer_tol * (abs(ll_prev) + 1e-12):
            break
        ll_prev = ll
    params = ModelParams(beta=np.zeros(data.p), alpha=alpha)
    return params, BaselineHazard(arr.event_times, rho), ll


def kkt_residuals(data: SurvivalDataset, spec: PenaltySpec, result: FitResult,
                  cfg: FitConfig = FitConfig()
                  ) -> list[tuple[bool, float]]:
    """Stationarity check of a fit, in the standardized coordinates.

    For each covariate group returns ``(active, value)``: active groups
    report the norm of the subgradient residual (should be ~0); inactive
    groups report ``||g_(j)|| - d`` where d is the penalty's threshold at
    zero (should be <= 0 up to tolerance).
    """
    from .penalty import group_penalty_deriv

    prob = _Problem(data, cfg)
    arr = prob.arr
    beta_std, jumps_std = prob.to_standardized(result.beta_hat,
                                               result.hazard_hat.jumps)
    lin = prob.Xs @ beta_std
    H = _cumhaz_from_pos(jumps_std, arr.event_pos)
    _, _, r = _denominator_terms(arr, H, lin, result.alpha_hat)
    q = (arr.A + result.alpha_hat)[arr.cluster_index] * r
    gfull = -(prob.Xs.T @ (arr.status.astype(float) - q)) / prob.n
    out: list[tuple[bool, float]] = []
    for j, gidx in enumerate(prob.groups):
        gj = gfull[gidx]
        bj = beta_std[gidx]
        pj = len(gidx)
        nb = float(np.linalg.norm(bj))
        if nb > 0:
            slope = group_penalty_deriv(spec, nb, pj)
            res = float(np.linalg.norm(gj + slope * bj / nb))
            out.append((True, res))
        else:
            thresh = group_penalty_deriv(spec, 0.0, pj)
            out.append((False, float(np.linalg.norm(gj)) - thresh))
    return out
