"""Compiled inner loops for fitting.

These mirror the numpy reference implementations in `likelihood` and
`optimizer` exactly (same update order, same guards) but run as nopython
kernels, which matters because fits are called tens of thousands of times
by cross-validation and the benchmark.  Equivalence against the reference
path is covered by tests.

If numba is unavailable the kernels run as plain Python; everything still
works, just slowly.
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def deco(fn):
            return fn

        return deco


_NEG_INF = -np.inf

# penalty kind codes shared with optimizer
KIND_GLASSO = 0
KIND_SCAD = 1
KIND_MCP = 2


@njit(cache=True)
def _cluster_log_terms(H, lin, cidx, n, alpha):
    """Per-obs a = log(H) + lin and per-cluster log(S + alpha), S = sum exp(a)."""
    m = lin.shape[0]
    a = np.empty(m)
    for t in range(m):
        if H[t] > 0.0:
            a[t] = math.log(H[t]) + lin[t]
        else:
            a[t] = _NEG_INF
    amax = np.full(n, _NEG_INF)
    for t in range(m):
        if a[t] > amax[cidx[t]]:
            amax[cidx[t]] = a[t]
    s = np.zeros(n)
    for t in range(m):
        if a[t] > _NEG_INF:
            s[cidx[t]] += math.exp(a[t] - amax[cidx[t]])
    la = math.log(alpha)
    lsa = np.empty(n)
    for i in range(n):
        if s[i] > 0.0:
            ls = amax[i] + math.log(s[i])
            if ls > la:
                lsa[i] = ls + math.log1p(math.exp(la - ls))
            else:
                lsa[i] = la + math.log1p(math.exp(ls - la))
        else:
            lsa[i] = la
    return a, lsa


_LSE_GUARD = 30.0


@njit(cache=True)
def _log_salpha(H, lin, cidx, n, alpha):
    """Per-cluster log(S + alpha); direct when exp(lin) cannot overflow."""
    m = lin.shape[0]
    linmax = -np.inf
    for t in range(m):
        if lin[t] > linmax:
            linmax = lin[t]
    lsa = np.empty(n)
    if linmax <= _LSE_GUARD:
        S = np.zeros(n)
        for t in range(m):
            S[cidx[t]] += H[t] * math.exp(lin[t])
        for i in range(n):
            lsa[i] = math.log(S[i] + alpha)
        return lsa
    _, lsa2 = _cluster_log_terms(H, lin, cidx, n, alpha)
    return lsa2


@njit(cache=True)
def _resid_terms(H, lin, status, cidx, A, n, alpha):
    """Score residual delta - (A+alpha) H e^lin / (S+alpha) per observation,
    plus per-cluster log(S + alpha)."""
    m = lin.shape[0]
    linmax = -np.inf
    for t in range(m):
        if lin[t] > linmax:
            linmax = lin[t]
    resid = np.empty(m)
    lsa = np.empty(n)
    if linmax <= _LSE_GUARD:
        w = np.empty(m)
        S = np.zeros(n)
        for t in range(m):
            w[t] = H[t] * math.exp(lin[t])
            S[cidx[t]] += w[t]
        for i in range(n):
            lsa[i] = math.log(S[i] + alpha)
        for t in range(m):
            i = cidx[t]
            resid[t] = status[t] - (A[i] + alpha) * w[t] / (S[i] + alpha)
        return resid, lsa
    a, lsa2 = _cluster_log_terms(H, lin, cidx, n, alpha)
    for t in range(m):
        q = 0.0
        if a[t] > _NEG_INF:
            q = (A[cidx[t]] + alpha) * math.exp(a[t] - lsa2[cidx[t]])
        resid[t] = status[t] - q
    return resid, lsa2


_SENTINEL = -1.0e300
_SENTINEL_GUARD = -1.0e250


@njit(cache=True, fastmath=True)
def _ll_buffers_seg(logh, lin, status, starts, A, n, alpha, e, cscale):
    """Segment variant of `_ll_buffers`: observations are cluster-contiguous,
    so each cluster is one pass with a scalar running max and no index
    gathers.  `starts` holds the n+1 segment boundaries."""
    m = lin.shape[0]
    la = math.log(alpha)
    val = 0.0
    for i in range(n):
        t0 = starts[i]
        t1 = starts[i + 1]
        amax = _SENTINEL
        for t in range(t0, t1):
            a = logh[t] + lin[t]
            e[t] = a
            if a > amax:
                amax = a
        if amax > _SENTINEL_GUARD:
            csum = 0.0
            for t in range(t0, t1):
                ex = math.exp(e[t] - amax)
                e[t] = ex
                csum += ex
            ls = amax + math.log(csum)
            if ls > la:
                lsa = ls + math.log1p(math.exp(la - ls))
            else:
                lsa = la + math.log1p(math.exp(ls - la))
            cscale[i] = math.exp(amax - lsa)
        else:
            for t in range(t0, t1):
                e[t] = 0.0
            lsa = la
            cscale[i] = 0.0
        val -= (A[i] + alpha) * lsa
    for t in range(m):
        val += lin[t] * status[t]
    return val


@njit(cache=True, fastmath=True)
def _resid_seg(status, starts, A, n, alpha, e, cscale, resid):
    """Score residual from the buffers of `_ll_buffers_seg`."""
    for i in range(n):
        q = (A[i] + alpha) * cscale[i]
        for t in range(starts[i], starts[i + 1]):
            resid[t] = status[t] - q * e[t]


@njit(cache=True, fastmath=True)
def _ll_buffers(logh, lin, status, cidx, A, n, alpha, e, cs, cscale):
    """Beta loglik via per-cluster shifted sums; robust at any magnitude.

    Fills e[t] = exp(a_t - amax_cluster) with a = logh + lin, cs[i] =
    cluster sums of e, and cscale[i] = exp(amax_i - log(S_i + alpha)), so
    the caller can form score residuals without further exponentials.
    Empty clusters (all hazard mass zero) use the sentinel branch.
    """
    m = lin.shape[0]
    for i in range(n):
        cscale[i] = _SENTINEL
    for t in range(m):
        a = logh[t] + lin[t]
        e[t] = a
        if a > cscale[cidx[t]]:
            cscale[cidx[t]] = a
    for i in range(n):
        cs[i] = 0.0
    for t in range(m):
        i = cidx[t]
        if cscale[i] > _SENTINEL_GUARD:
            e[t] = math.exp(e[t] - cscale[i])
            cs[i] += e[t]
        else:
            e[t] = 0.0
    val = 0.0
    for t in range(m):
        val += lin[t] * status[t]
    la = math.log(alpha)
    for i in range(n):
        amax = cscale[i]
        if amax > _SENTINEL_GUARD and cs[i] > 0.0:
            ls = amax + math.log(cs[i])
            if ls > la:
                lsa = ls + math.log1p(math.exp(la - ls))
            else:
                lsa = la + math.log1p(math.exp(ls - la))
            cscale[i] = math.exp(amax - lsa)
        else:
            lsa = la
            cscale[i] = 0.0
        val -= (A[i] + alpha) * lsa
    return val


@njit(cache=True, fastmath=True)
def _resid_from_buffers(status, cidx, A, n, alpha, e, cscale, resid):
    """Score residual from the buffers of `_ll_buffers`."""
    for t in range(status.shape[0]):
        i = cidx[t]
        resid[t] = status[t] - (A[i] + alpha) * e[t] * cscale[i]


@njit(cache=True)
def beta_loglik_k(H, lin, status, cidx, A, n, alpha):
    lsa = _log_salpha(H, lin, cidx, n, alpha)
    val = 0.0
    for t in range(lin.shape[0]):
        val += lin[t] * status[t]
    for i in range(n):
        val -= (A[i] + alpha) * lsa[i]
    return val


@njit(cache=True)
def marginal_loglik_k(rho, H, lin, status, cidx, A, event_pos, n, alpha):
    _, lsa = _cluster_log_terms(H, lin, cidx, n, alpha)
    val = 0.0
    for t in range(lin.shape[0]):
        if status[t] > 0.0:
            val += lin[t] + math.log(rho[event_pos[t] - 1])
    val += n * (alpha * math.log(alpha) - math.lgamma(alpha))
    for i in range(n):
        val += math.lgamma(A[i] + alpha) - (A[i] + alpha) * lsa[i]
    return val


@njit(cache=True)
def _pen_scalar(t, lam, kind, gamma):
    """Scalar penalty at size-adjusted norm t."""
    if kind == KIND_GLASSO:
        return lam * t
    if kind == KIND_SCAD:
        if t <= lam:
            return lam * t
        if t <= gamma * lam:
            return (2.0 * gamma * lam * t - t * t - lam * lam) / (2.0 * (gamma - 1.0))
        return lam * lam * (gamma + 1.0) / 2.0
    # MCP
    if t <= gamma * lam:
        return lam * t - t * t / (2.0 * gamma)
    return gamma * lam * lam / 2.0


@njit(cache=True)
def _prox_scale(u, step, lam, kind, gamma, c):
    """Return s such that s*z solves the group proximal problem, u = ||z||."""
    if u == 0.0:
        return 0.0
    if kind == KIND_GLASSO:
        thr = step * lam * c
        if u <= thr:
            return 0.0
        return 1.0 - thr / u
    # nonconvex: 1-D minimization in y = c*x, candidates enumerated
    eta = step * c * c
    a = c * u
    best_y = 0.0
    best_f = (0.0 - a) ** 2 / (2.0 * eta) + _pen_scalar(0.0, lam, kind, gamma)
    n_cand = 0
    cands = np.empty(6)
    cands[n_cand] = a
    n_cand += 1
    if kind == KIND_SCAD:
        cands[n_cand] = lam
        n_cand += 1
        cands[n_cand] = gamma * lam
        n_cand += 1
        y1 = a - eta * lam
        if 0.0 <= y1 <= lam:
            cands[n_cand] = y1
            n_cand += 1
        denom = gamma - 1.0 - eta
        if denom != 0.0:
            y2 = ((gamma - 1.0) * a - eta * gamma * lam) / denom
            if lam <= y2 <= gamma * lam:
                cands[n_cand] = y2
                n_cand += 1
    else:
        cands[n_cand] = gamma * lam
        n_cand += 1
        denom = 1.0 - eta / gamma
        if denom > 0.0:
            y1 = (a - eta * lam) / denom
            if 0.0 <= y1 <= gamma * lam:
                cands[n_cand] = y1
                n_cand += 1
    for q in range(n_cand):
        y = cands[q]
        if y < 0.0:
            continue
        f = (y - a) ** 2 / (2.0 * eta) + _pen_scalar(y, lam, kind, gamma)
        if f < best_f - 1e-15 * (1.0 + abs(f)):
            best_y, best_f = y, f
    return best_y / (c * u)


@njit(cache=True, fastmath=True)
def bcgd_pass_k(XT, status, cidx, A, H, lin, beta, gptr, alpha, n,
                lam, kind, gamma, step0, shrink, sigma, tol, max_cycles):
    """Cycle proximal gradient steps over groups; mutates beta and lin.

    Returns 0 when every block is stationary to within tol, -1 when the
    cycle cap ran out with blocks still moving, and j+1 if the line
    search failed on group j.
    XT is the standardized design transposed to (p, m) with rows in
    group-contiguous order (contiguous dot products); beta uses the same
    row order.  Each group remembers its last accepted step size as the
    next starting point (re-probing from step0 every few cycles), which
    skips most of the backtracking the curvature would otherwise force
    on every single move.
    """
    m = lin.shape[0]
    K = gptr.shape[0] - 1
    logh = np.empty(m)
    for t in range(m):
        logh[t] = math.log(H[t]) if H[t] > 0.0 else _SENTINEL
    starts = np.zeros(n + 1, dtype=np.int64)
    for t in range(m):
        starts[cidx[t] + 1] += 1
    for i in range(n):
        starts[i + 1] += starts[i]
    e_buf = np.empty(m)
    cscale = np.empty(n)
    resid = np.empty(m)
    f = -_ll_buffers_seg(logh, lin, status, starts, A, n, alpha,
                         e_buf, cscale) / n
    _resid_seg(status, starts, A, n, alpha, e_buf, cscale, resid)
    lin_new = np.empty(m)
    steps = np.full(K, step0)
    for _cycle in range(max_cycles):
        maxmove = 0.0
        probe = _cycle % 8 == 0
        for j in range(K):
            s0 = gptr[j]
            pj = gptr[j + 1] - s0
            c = math.sqrt(pj)
            g = np.empty(pj)
            for cc in range(pj):
                acc = 0.0
                for t in range(m):
                    acc += XT[s0 + cc, t] * resid[t]
                g[cc] = -acc / n
            bnorm = 0.0
            for cc in range(pj):
                bnorm += beta[s0 + cc] ** 2
            bnorm = math.sqrt(bnorm)
            pen_old = _pen_scalar(c * bnorm, lam, kind, gamma)
            z = np.empty(pj)
            d = np.empty(pj)
            # Stationarity is judged at the fixed reference step so it does
            # not depend on the remembered step size: the displacement of
            # the proximal candidate at step0 is the gradient-map residual
            # the outer stopping rule is meant to bound.
            znorm = 0.0
            for cc in range(pj):
                z[cc] = beta[s0 + cc] - step0 * g[cc]
                znorm += z[cc] ** 2
            znorm = math.sqrt(znorm)
            scale = _prox_scale(znorm, step0, lam, kind, gamma, c)
            dn0 = 0.0
            for cc in range(pj):
                dn0 += (scale * z[cc] - beta[s0 + cc]) ** 2
            dn0 = math.sqrt(dn0)
            thr = tol * (1.0 + bnorm)
            if dn0 <= thr:
                continue
            mv = dn0 / (1.0 + bnorm)
            if mv > maxmove:
                maxmove = mv
            step = step0 if probe else steps[j]
            accepted = False
            for _h in range(51):
                znorm = 0.0
                for cc in range(pj):
                    z[cc] = beta[s0 + cc] - step * g[cc]
                    znorm += z[cc] ** 2
                znorm = math.sqrt(znorm)
                scale = _prox_scale(znorm, step, lam, kind, gamma, c)
                dn = 0.0
                gd = 0.0
                cand_norm = 0.0
                for cc in range(pj):
                    cand = scale * z[cc]
                    d[cc] = cand - beta[s0 + cc]
                    dn += d[cc] ** 2
                    gd += g[cc] * d[cc]
                    cand_norm += cand ** 2
                dn = math.sqrt(dn)
                cand_norm = math.sqrt(cand_norm)
                # Backtracking shrinks the candidate displacement with the
                # step; once the displacement falls below the tolerance at
                # the same normalized rate, further halving is noise and the
                # block stays put for this cycle.
                if dn <= thr * (step / step0):
                    accepted = True
                    break
                pen_new = _pen_scalar(c * cand_norm, lam, kind, gamma)
                decrease = gd + pen_new - pen_old
                for t in range(m):
                    lin_new[t] = lin[t]
                for cc in range(pj):
                    dc = d[cc]
                    for t in range(m):
                        lin_new[t] += XT[s0 + cc, t] * dc
                f_new = -_ll_buffers_seg(logh, lin_new, status, starts, A,
                                         n, alpha, e_buf, cscale) / n
                if (f_new + pen_new
                        <= f + pen_old + sigma * decrease
                        + 1e-14 * (abs(f) + 1.0)):
                    for cc in range(pj):
                        beta[s0 + cc] += d[cc]
                    for t in range(m):
                        lin[t] = lin_new[t]
                    f = f_new
                    _resid_seg(status, starts, A, n, alpha, e_buf, cscale,
                               resid)
                    steps[j] = step
                    accepted = True
                    break
                step *= shrink
            if not accepted:
                return j + 1
        if maxmove < tol:
            return 0
    return -1


@njit(cache=True)
def rho_sweep_k(rho, lin, status, event_pos, cidx, A, n, alpha):
    """One Gauss-Seidel sweep of the hazard-jump fixed point; mutates rho.

    Returns 0 on success, k+1 on a degenerate risk set at event index k.
    """
    m = lin.shape[0]
    N = rho.shape[0]
    linmax = -np.inf
    for t in range(m):
        if lin[t] > linmax:
            linmax = lin[t]
    shift = linmax - 30.0
    if shift < 0.0:
        shift = 0.0
    esh = math.exp(shift)
    w = np.empty(m)
    for t in range(m):
        w[t] = math.exp(lin[t] - shift)
    rho_s = np.empty(N)
    for k in range(N):
        rho_s[k] = rho[k] * esh
    # W[k, i] = cluster-i weight at risk at event k  (event_pos > k)
    W = np.zeros((N + 1, n))
    for t in range(m):
        W[event_pos[t], cidx[t]] += w[t]
    for k in range(N - 1, -1, -1):
        for i in range(n):
            W[k, i] += W[k + 1, i]
    S = np.zeros(n)
    cum = 0.0
    Hcum = np.empty(N + 1)
    Hcum[0] = 0.0
    for k in range(N):
        cum += rho_s[k]
        Hcum[k + 1] = cum
    for t in range(m):
        S[cidx[t]] += Hcum[event_pos[t]] * w[t]
    for k in range(N):
        rhs = 0.0
        for i in range(n):
            rhs += (A[i] + alpha) * W[k + 1, i] / (alpha + S[i])
        if not (rhs > 0.0 and math.isfinite(rhs)):
            return k + 1
        new = 1.0 / rhs
        dl = new - rho_s[k]
        for i in range(n):
            S[i] += dl * W[k + 1, i]
        rho_s[k] = new
    for k in range(N):
        rho[k] = rho_s[k] / esh
    return 0


@njit(cache=True)
def alpha_search_k(H, lin, cidx, A, n, grid):
    """Index of the grid value maximizing the frailty likelihood component.

    The grid is ascending, so the first maximum breaks ties toward the
    smaller alpha.  Non-finite grid evaluations are skipped; returns -1 if
    every value fails.
    """
    m = lin.shape[0]
    a = np.empty(m)
    for t in range(m):
        if H[t] > 0.0:
            a[t] = math.log(H[t]) + lin[t]
        else:
            a[t] = _NEG_INF
    amax = np.full(n, _NEG_INF)
    for t in range(m):
        if a[t] > amax[cidx[t]]:
            amax[cidx[t]] = a[t]
    s = np.zeros(n)
    for t in range(m):
        if a[t] > _NEG_INF:
            s[cidx[t]] += math.exp(a[t] - amax[cidx[t]])
    log_s = np.empty(n)
    for i in range(n):
        if s[i] > 0.0:
            log_s[i] = amax[i] + math.log(s[i])
        else:
            log_s[i] = _NEG_INF
    best = -1
    best_val = -np.inf
    for gidx in range(grid.shape[0]):
        alpha = grid[gidx]
        la = math.log(alpha)
        val = n * (alpha * la - math.lgamma(alpha))
        for i in range(n):
            if log_s[i] > la:
                lsa = log_s[i] + math.log1p(math.exp(la - log_s[i]))
            elif log_s[i] > _NEG_INF:
                lsa = la + math.log1p(math.exp(log_s[i] - la))
            else:
                lsa = la
            val += math.lgamma(A[i] + alpha) - (A[i] + alpha) * lsa
        if math.isfinite(val) and val > best_val:
            best = gidx
            best_val = val
    return best
