"""CSV/JSON serialization for datasets, fits, paths, CV and benchmarks.

All writers are atomic (temp file + rename) and embed the resolved run
configuration for provenance: JSON files carry a ``config`` key, CSV
files a leading ``# config: {...}`` comment line.
"""

from __future__ import annotations

import csv
import io as _io
import json
import os
import tempfile
from typing import Sequence

import numpy as np

from .data import (Cluster, GroupStructure, Observation, SurvivalDataset)
from .errors import ConfigError
from .optimizer import FitResult
from .simulate import BenchmarkSummary, SimTruth
from .tuning import CVResult, PathResult


def atomic_write_text(path: str, text: str) -> None:
    """Write via a temp file in the same directory, then rename."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _config_comment(config: dict | None) -> str:
    if config is None:
        return ""
    return "# config: " + json.dumps(config, sort_keys=True) + "\n"


# ---------------------------------------------------------------- datasets

def write_groups_json(groups: GroupStructure, path: str) -> None:
    """Group structure JSON with 1-based covariate indices."""
    payload = {"groups": [[i + 1 for i in g] for g in groups.groups]}
    atomic_write_text(path, _json_dumps(payload))


def read_groups_json(path: str) -> GroupStructure:
    with open(path) as fh:
        payload = json.load(fh)
    try:
        groups = tuple(tuple(int(i) - 1 for i in g) for g in payload["groups"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad group structure file {path}: {exc}") from exc
    return GroupStructure(groups)


def write_dataset_csv(dataset: SurvivalDataset, path: str,
                      config: dict | None = None) -> None:
    buf = _io.StringIO()
    buf.write(_config_comment(config))
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["cluster_id", "time", "status"]
                    + [f"x{i + 1}" for i in range(dataset.p)])
    for cl in dataset.clusters:
        for obs in cl.observations:
            writer.writerow([cl.id, repr(float(obs.time)), obs.status]
                            + [repr(float(v)) for v in obs.covariates])
    atomic_write_text(path, buf.getvalue())


def read_dataset_csv(data_path: str, groups_path: str) -> SurvivalDataset:
    """Load `cluster_id,time,status,x1..xp` rows plus a group-structure JSON.

    Rows are grouped by cluster_id in first-appearance order; comment lines
    starting with '#' are skipped.
    """
    groups = read_groups_json(groups_path)
    p = groups.p
    by_cluster: dict[str, list[Observation]] = {}
    with open(data_path, newline="") as fh:
        rows = (r for r in fh if not r.startswith("#"))
        reader = csv.reader(rows)
        header = next(reader, None)
        if header is None or header[:3] != ["cluster_id", "time", "status"]:
            raise ConfigError(
                f"{data_path}: expected header cluster_id,time,status,x1..xp")
        if len(header) != 3 + p:
            raise ConfigError(
                f"{data_path}: {len(header) - 3} covariate columns but the "
                f"group structure covers {p}")
        for row in reader:
            if not row:
                continue
            cid, time, status = row[0], float(row[1]), int(row[2])
            cov = np.asarray([float(v) for v in row[3:]], dtype=float)
            by_cluster.setdefault(cid, []).append(
                Observation(time, status, cov))
    clusters = tuple(Cluster(cid, tuple(obs))
                     for cid, obs in by_cluster.items())
    return SurvivalDataset(clusters, p, groups)


def write_truth_json(truth: SimTruth, path: str,
                     config: dict | None = None) -> None:
    payload = {
        "config": config,
        "frailties": [float(u) for u in truth.frailties],
        "true_active_groups": sorted(int(j) for j in truth.true_active_groups),
        "beta_true": [float(b) for b in truth.beta_true],
    }
    atomic_write_text(path, _json_dumps(payload))


# -------------------------------------------------------------------- fits

def fit_result_payload(result: FitResult, config: dict | None = None) -> dict:
    return {
        "config": config,
        "beta_hat": [float(b) for b in result.beta_hat],
        "active_groups": [int(j) for j in result.active_groups],
        "alpha_hat": float(result.alpha_hat),
        "hazard": {
            "event_times": [float(t) for t in result.hazard_hat.event_times],
            "jumps": [float(r) for r in result.hazard_hat.jumps],
        },
        "objective_trace": [float(v) for v in result.objective_trace],
        "n_outer": int(result.n_outer),
        "converged": bool(result.converged),
    }


def write_fit_json(result: FitResult, path: str,
                   config: dict | None = None) -> None:
    atomic_write_text(path, _json_dumps(fit_result_payload(result, config)))


def write_path_csv(path_result: PathResult, groups: GroupStructure,
                   path: str, config: dict | None = None) -> None:
    """Tidy per-(lambda, group) rows: lambda,group_id,norm,active."""
    buf = _io.StringIO()
    buf.write(_config_comment(config))
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["lambda", "group_id", "norm", "active"])
    for lam, fitres in zip(path_result.lambdas, path_result.fits):
        if fitres is None:
            continue
        for j, g in enumerate(groups.groups):
            norm = float(np.linalg.norm(fitres.beta_hat[list(g)]))
            writer.writerow([repr(lam), j, repr(norm), int(norm > 0)])
    atomic_write_text(path, buf.getvalue())


def write_cv_csv(cv: CVResult, path: str, config: dict | None = None) -> None:
    buf = _io.StringIO()
    buf.write(_config_comment(config))
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["lambda", "cve"])
    for lam, score in zip(cv.lambdas, cv.cve):
        writer.writerow([repr(lam), repr(score)])
    atomic_write_text(path, buf.getvalue())


def write_bench_rows_csv(bench: BenchmarkSummary, path: str,
                         config: dict | None = None) -> None:
    buf = _io.StringIO()
    buf.write(_config_comment(config))
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["replicate", "penalty", "lambda_opt", "cve", "r2",
                     "tp_groups", "fp_groups"])
    for row in bench.rows:
        writer.writerow([row.replicate, row.penalty, repr(row.lambda_opt),
                         repr(row.cve), repr(row.r2), row.tp_groups,
                         row.fp_groups])
    atomic_write_text(path, buf.getvalue())


def write_bench_summary_json(bench: BenchmarkSummary, path: str,
                             config: dict | None = None) -> None:
    payload = {
        "config": config,
        "summary": bench.summary,
        "failures": [{"replicate": r, "message": msg}
                     for r, msg in bench.failures],
    }
    atomic_write_text(path, _json_dumps(payload))
