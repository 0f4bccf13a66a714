"""Command-line entry point.

Subcommands: simulate, fit, path, cv, bench.  Outputs are written
atomically; on failure a machine-readable error JSON goes to stderr and
the exit code identifies the category: 0 ok, 2 config, 3 data
validation, 4 numerical failure, 5 I/O.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import io as fio
from .data import break_ties, validate_dataset
from .errors import (ConfigError, DataValidationError, FrailtyGlassoError,
                     NumericalError)
from .likelihood import LikelihoodContext, marginal_loglik
from .optimizer import DEFAULT_ALPHA_GRID, FitConfig, fit, fit_null
from .penalty import PenaltySpec, lambda_max
from .simulate import SimConfig, run_benchmark, simulate_dataset
from .tuning import kfold_cv, make_lambda_grid, solution_path
from .data import ModelParams
from .metrics import pseudo_r2

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4
EXIT_IO = 5


def _parse_alpha_grid(text: str) -> tuple[float, ...]:
    try:
        lo, hi, n = text.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
        if not (0 < lo < hi and n >= 1):
            raise ValueError
    except ValueError:
        raise ConfigError(
            f"--alpha-grid expects LO:HI:N with 0 < LO < HI, got {text!r}")
    return tuple(np.geomspace(lo, hi, n))


def _parse_lambda_grid(text: str) -> tuple[int, float]:
    try:
        n, ratio = text.split(":")
        n, ratio = int(n), float(ratio)
        if not (n >= 2 and 0 < ratio < 1):
            raise ValueError
    except ValueError:
        raise ConfigError(
            f"--lambda-grid expects N:RATIO with N >= 2 and RATIO in (0,1), "
            f"got {text!r}")
    return n, ratio


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="frailty-glasso",
        description="Group-penalized Cox regression with shared gamma frailty")
    parser.add_argument("--config", help="JSON file of flag defaults "
                        "(precedence: defaults < config file < flags)")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_data_flags(p):
        p.add_argument("--data", required=True, help="dataset CSV")
        p.add_argument("--groups", required=True, help="group-structure JSON")
        p.add_argument("--tie-break", choices=["error", "jitter"],
                       default="error",
                       help="what to do with tied event times")

    def add_fit_flags(p):
        p.add_argument("--penalty", choices=["glasso", "gscad", "gmcp"],
                       default="glasso")
        p.add_argument("--scad-gamma", type=float, default=3.7)
        p.add_argument("--mcp-gamma", type=float, default=3.0)
        p.add_argument("--alpha-grid", default="0.05:20:20",
                       help="LO:HI:N log-spaced frailty grid")
        p.add_argument("--outer-tol", type=float, default=1e-6)
        p.add_argument("--max-outer", type=int, default=200)

    p_sim = sub.add_parser("simulate", help="write a simulated dataset")
    p_sim.add_argument("--n-clusters", type=int, default=10)
    p_sim.add_argument("--cluster-size", type=int, default=10)
    p_sim.add_argument("--p", type=int, default=100)
    p_sim.add_argument("--n-groups", type=int, default=10)
    p_sim.add_argument("--ar-rho", type=float, default=0.5)
    p_sim.add_argument("--weibull-scale", type=float, default=1.0)
    p_sim.add_argument("--weibull-shape", type=float, default=2.0)
    p_sim.add_argument("--alpha-true", type=float, default=2.0)
    p_sim.add_argument("--censor-scale", type=float, default=3.0)
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--out", required=True, help="output directory")

    p_fit = sub.add_parser("fit", help="fit at a single lambda")
    add_data_flags(p_fit)
    add_fit_flags(p_fit)
    p_fit.add_argument("--lambda", dest="lam", type=float, required=True)
    p_fit.add_argument("--out", default="fit.json")

    p_path = sub.add_parser("path", help="warm-started solution path")
    add_data_flags(p_path)
    add_fit_flags(p_path)
    p_path.add_argument("--lambda-grid", default="50:0.01", help="N:RATIO")
    p_path.add_argument("--out", default="path.csv")

    p_cv = sub.add_parser("cv", help="k-fold cross-validated lambda")
    add_data_flags(p_cv)
    add_fit_flags(p_cv)
    p_cv.add_argument("--lambda-grid", default="50:0.01", help="N:RATIO")
    p_cv.add_argument("--k", type=int, default=10)
    p_cv.add_argument("--seed", type=int, default=None)
    p_cv.add_argument("--out", required=True, help="output directory")

    p_bench = sub.add_parser("bench", help="multi-penalty simulation benchmark")
    p_bench.add_argument("--replicates", type=int, default=100)
    p_bench.add_argument("--penalties", default="glasso,gscad,gmcp")
    p_bench.add_argument("--k", type=int, default=10)
    p_bench.add_argument("--lambda-grid", default="50:0.01", help="N:RATIO")
    p_bench.add_argument("--scad-gamma", type=float, default=3.7)
    p_bench.add_argument("--mcp-gamma", type=float, default=3.0)
    p_bench.add_argument("--seed", type=int, default=None)
    p_bench.add_argument("--jobs", type=int, default=1)
    p_bench.add_argument("--n-clusters", type=int, default=10)
    p_bench.add_argument("--cluster-size", type=int, default=10)
    p_bench.add_argument("--p", type=int, default=100)
    p_bench.add_argument("--n-groups", type=int, default=10)
    p_bench.add_argument("--out", required=True, help="output directory")
    return parser


def _inject_config(argv: list[str]) -> list[str]:
    """Expand --config FILE into flags placed before the user's own flags."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    try:
        cfg_path = argv[i + 1]
    except IndexError:
        raise ConfigError("--config requires a file argument")
    try:
        with open(cfg_path) as fh:
            values = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config file {cfg_path}: {exc}")
    if not isinstance(values, dict):
        raise ConfigError(f"config file {cfg_path} must hold a JSON object")
    rest = argv[:i] + argv[i + 2:]
    if not rest:
        raise ConfigError("config file given but no subcommand")
    tokens: list[str] = []
    for key, val in sorted(values.items()):
        tokens += [f"--{key.replace('_', '-')}", str(val)]
    # insert after the subcommand so explicit flags still win
    return rest[:1] + tokens + rest[1:]


def _resolve_seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("FRAILTY_GLASSO_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(
                f"FRAILTY_GLASSO_SEED must be an integer, got {env!r}")
    return 0


def _resolved_config(args, skip=("out", "jobs", "config", "subcommand")) -> dict:
    # jobs and output paths are execution details: excluding them keeps
    # outputs byte-identical across schedules
    return {k: v for k, v in sorted(vars(args).items())
            if k not in skip and v is not None}


def _load_dataset(args):
    data = fio.read_dataset_csv(args.data, args.groups)
    try:
        return validate_dataset(data)
    except DataValidationError as exc:
        if args.tie_break == "jitter" and exc.codes <= {"TiedEventTimes"}:
            return validate_dataset(break_ties(data))
        raise


def _fit_config(args) -> FitConfig:
    return FitConfig(alpha_grid=_parse_alpha_grid(args.alpha_grid),
                     outer_tol=args.outer_tol, max_outer=args.max_outer)


def _penalty_spec(args, lam: float) -> PenaltySpec:
    return PenaltySpec(kind=args.penalty, lam=lam,
                       gamma_scad=args.scad_gamma, gamma_mcp=args.mcp_gamma)


def _cmd_simulate(args) -> None:
    seed = _resolve_seed(args)
    cfg = SimConfig(n_clusters=args.n_clusters, cluster_size=args.cluster_size,
                    p=args.p, n_covariate_groups=args.n_groups,
                    ar_rho=args.ar_rho, weibull_scale=args.weibull_scale,
                    weibull_shape=args.weibull_shape,
                    alpha_true=args.alpha_true,
                    censor_scale=args.censor_scale, seed=seed)
    truth = simulate_dataset(cfg)
    resolved = _resolved_config(args) | {"seed": seed}
    os.makedirs(args.out, exist_ok=True)
    fio.write_dataset_csv(truth.dataset, os.path.join(args.out, "dataset.csv"),
                          config=resolved)
    fio.write_groups_json(truth.dataset.group_structure,
                          os.path.join(args.out, "groups.json"))
    fio.write_truth_json(truth, os.path.join(args.out, "truth.json"),
                         config=resolved)


def _cmd_fit(args) -> None:
    data = _load_dataset(args)
    result = fit(data, _penalty_spec(args, args.lam), _fit_config(args))
    fio.write_fit_json(result, args.out, config=_resolved_config(args))


def _cmd_path(args) -> None:
    data = _load_dataset(args)
    n_points, ratio = _parse_lambda_grid(args.lambda_grid)
    grid = make_lambda_grid(lambda_max(data, alpha0=1.0), n_points, ratio)
    result = solution_path(data, _penalty_spec(args, 0.0), _fit_config(args),
                           grid)
    fio.write_path_csv(result, data.group_structure, args.out,
                       config=_resolved_config(args))


def _cmd_cv(args) -> None:
    data = _load_dataset(args)
    seed = _resolve_seed(args)
    n_points, ratio = _parse_lambda_grid(args.lambda_grid)
    cfg = _fit_config(args)
    cv = kfold_cv(data, _penalty_spec(args, 0.0), cfg, k=args.k, seed=seed,
                  n_lambda=n_points, grid_ratio=ratio)
    resolved = _resolved_config(args) | {"seed": seed}
    os.makedirs(args.out, exist_ok=True)
    fio.write_cv_csv(cv, os.path.join(args.out, "cv.csv"), config=resolved)
    result = fit(data, _penalty_spec(args, cv.lambda_opt), cfg)
    payload = fio.fit_result_payload(result, config=resolved)
    payload["lambda_opt"] = cv.lambda_opt
    ctx = LikelihoodContext.build(data, result.hazard_hat)
    ll_fit = marginal_loglik(ModelParams(result.beta_hat, result.alpha_hat), ctx)
    _, _, ll_null = fit_null(data, cfg)
    payload["pseudo_r2"] = pseudo_r2(ll_fit, ll_null, data.n_observations)
    fio.atomic_write_text(os.path.join(args.out, "fit.json"),
                          fio._json_dumps(payload))


def _cmd_bench(args) -> None:
    seed = _resolve_seed(args)
    cfg = SimConfig(n_clusters=args.n_clusters, cluster_size=args.cluster_size,
                    p=args.p, n_covariate_groups=args.n_groups, seed=seed)
    penalties = [p.strip() for p in args.penalties.split(",") if p.strip()]
    n_points, ratio = _parse_lambda_grid(args.lambda_grid)
    bench = run_benchmark(cfg, args.replicates, penalties, k=args.k,
                          n_lambda=n_points, grid_ratio=ratio,
                          scad_gamma=args.scad_gamma, mcp_gamma=args.mcp_gamma,
                          n_jobs=args.jobs)
    resolved = _resolved_config(args) | {"seed": seed}
    os.makedirs(args.out, exist_ok=True)
    fio.write_bench_rows_csv(bench, os.path.join(args.out, "bench_rows.csv"),
                             config=resolved)
    fio.write_bench_summary_json(
        bench, os.path.join(args.out, "bench_summary.json"), config=resolved)


_COMMANDS = {
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "path": _cmd_path,
    "cv": _cmd_cv,
    "bench": _cmd_bench,
}


def _emit_error(exc: Exception) -> None:
    print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
          file=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv = _inject_config(argv)
        args = _build_parser().parse_args(argv)
        _COMMANDS[args.subcommand](args)
        return EXIT_OK
    except ConfigError as exc:
        _emit_error(exc)
        return EXIT_CONFIG
    except DataValidationError as exc:
        _emit_error(exc)
        return EXIT_DATA
    except NumericalError as exc:
        _emit_error(exc)
        return EXIT_NUMERICAL
    except FrailtyGlassoError as exc:
        _emit_error(exc)
        return EXIT_NUMERICAL
    except OSError as exc:
        _emit_error(exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
