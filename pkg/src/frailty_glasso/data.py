"""Domain types for clustered censored survival data.

Clusters are frailty-sharing units (all members share one latent gamma
multiplier on the hazard); covariate groups are index sets over the p
coefficients that the group penalty treats jointly.  The two structures
are independent and deliberately named differently everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DataValidationError, NoEvents


@dataclass(frozen=True)
class Observation:
    """A single follow-up record: time, event status and covariate row."""

    time: float
    status: int  # 1 = event observed, 0 = censored
    covariates: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "covariates", np.asarray(self.covariates, dtype=float)
        )


@dataclass(frozen=True)
class Cluster:
    """Ordered observations sharing one frailty value."""

    id: str
    observations: tuple[Observation, ...]

    def __post_init__(self):
        object.__setattr__(self, "observations", tuple(self.observations))

    @property
    def event_count(self) -> int:
        return sum(o.status for o in self.observations)


@dataclass(frozen=True)
class GroupStructure:
    """Disjoint covariate index sets (0-based) covering {0..p-1}."""

    groups: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "groups", tuple(tuple(int(i) for i in g) for g in self.groups)
        )

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(g) for g in self.groups)

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def p(self) -> int:
        return sum(self.sizes)

    @staticmethod
    def contiguous(p: int, n_groups: int) -> "GroupStructure":
        """Split {0..p-1} into n_groups near-equal contiguous blocks."""
        bounds = np.linspace(0, p, n_groups + 1).astype(int)
        return GroupStructure(
            tuple(tuple(range(bounds[k], bounds[k + 1])) for k in range(n_groups))
        )


class DatasetArrays(NamedTuple):
    """Flat array view of a dataset, observations ordered by cluster.

    ``event_pos[i]`` is the number of pooled event times <= time[i]; for an
    uncensored observation ``event_pos[i] - 1`` indexes its own jump.
    """

    times: np.ndarray          # (m,)
    status: np.ndarray         # (m,) int
    X: np.ndarray              # (m, p)
    cluster_index: np.ndarray  # (m,) int in [0, n)
    cluster_ids: tuple[str, ...]
    A: np.ndarray              # (n,) events per cluster
    event_times: np.ndarray    # (N,) strictly increasing
    event_pos: np.ndarray      # (m,) int in [0, N]

    @property
    def n(self) -> int:
        return len(self.cluster_ids)

    @property
    def m(self) -> int:
        return self.times.shape[0]

    @property
    def n_events(self) -> int:
        return self.event_times.shape[0]


@dataclass(frozen=True)
class SurvivalDataset:
    """Clustered survival data plus the covariate group partition."""

    clusters: tuple[Cluster, ...]
    p: int
    group_structure: GroupStructure
    _arrays_cache: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "clusters", tuple(self.clusters))

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    @property
    def n_observations(self) -> int:
        return sum(len(c.observations) for c in self.clusters)

    def to_arrays(self) -> DatasetArrays:
        """Flatten into arrays; cached since the dataset is immutable."""
        if self._arrays_cache:
            return self._arrays_cache[0]
        times, status, rows, cidx = [], [], [], []
        ids = []
        for i, cl in enumerate(self.clusters):
            ids.append(cl.id)
            for obs in cl.observations:
                times.append(obs.time)
                status.append(obs.status)
                rows.append(obs.covariates)
                cidx.append(i)
        times = np.asarray(times, dtype=float)
        status = np.asarray(status, dtype=np.int64)
        X = np.asarray(rows, dtype=float).reshape(len(times), self.p)
        cluster_index = np.asarray(cidx, dtype=np.int64)
        A = np.bincount(cluster_index, weights=status, minlength=len(ids)).astype(
            np.int64
        )
        event_times = np.sort(times[status == 1])
        event_pos = np.searchsorted(event_times, times, side="right")
        arr = DatasetArrays(
            times=times,
            status=status,
            X=X,
            cluster_index=cluster_index,
            cluster_ids=tuple(ids),
            A=A,
            event_times=event_times,
            event_pos=event_pos,
        )
        self._arrays_cache.append(arr)
        return arr

    def subset(self, cluster_indices: Sequence[int]) -> "SurvivalDataset":
        """New dataset keeping only the given clusters (order preserved)."""
        return SurvivalDataset(
            clusters=tuple(self.clusters[i] for i in cluster_indices),
            p=self.p,
            group_structure=self.group_structure,
        )


@dataclass(frozen=True)
class BaselineHazard:
    """Step-function cumulative hazard: positive jumps at pooled event times."""

    event_times: np.ndarray
    jumps: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "event_times", np.asarray(self.event_times, dtype=float)
        )
        object.__setattr__(self, "jumps", np.asarray(self.jumps, dtype=float))

    @staticmethod
    def flat(event_times: np.ndarray) -> "BaselineHazard":
        """Uniform initial jumps summing to one."""
        n = len(event_times)
        return BaselineHazard(event_times, np.full(n, 1.0 / max(n, 1)))


@dataclass(frozen=True)
class ModelParams:
    """Coefficient vector and gamma frailty parameter (shape = rate)."""

    beta: np.ndarray
    alpha: float

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float))
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")


def validate_dataset(raw: SurvivalDataset) -> SurvivalDataset:
    """Check every type invariant; raise listing all violations found.

    Event-event ties are rejected (the profiled hazard assumes distinct
    event times).  A censored time coinciding with an event time is fine.
    """
    violations: list[tuple[str, str]] = []
    if not raw.clusters:
        violations.append(("EmptyCluster", "dataset has no clusters"))
    for cl in raw.clusters:
        if not cl.observations:
            violations.append(("EmptyCluster", f"cluster {cl.id!r} is empty"))
        for k, obs in enumerate(cl.observations):
            if not (np.isfinite(obs.time) and obs.time > 0):
                violations.append(
                    ("NonPositiveTime",
                     f"cluster {cl.id!r} obs {k}: time {obs.time!r}")
                )
            if obs.status not in (0, 1):
                violations.append(
                    ("InvalidStatus",
                     f"cluster {cl.id!r} obs {k}: status {obs.status!r}")
                )
            if obs.covariates.shape != (raw.p,):
                violations.append(
                    ("DimensionMismatch",
                     f"cluster {cl.id!r} obs {k}: {obs.covariates.shape[0] if obs.covariates.ndim == 1 else obs.covariates.shape} covariates, expected {raw.p}")
                )
            elif not np.isfinite(obs.covariates).all():
                violations.append(
                    ("NonFiniteCovariate",
                     f"cluster {cl.id!r} obs {k}: non-finite covariate")
                )

    groups = raw.group_structure.groups
    seen: set[int] = set()
    overlap = False
    for g in groups:
        if len(g) < 1:
            violations.append(("GroupPartitionInvalid", "empty covariate group"))
        for idx in g:
            if idx in seen:
                overlap = True
            seen.add(idx)
    if overlap:
        violations.append(("GroupPartitionInvalid", "covariate groups overlap"))
    if seen != set(range(raw.p)):
        violations.append(
            ("GroupPartitionInvalid",
             f"groups do not partition 0..{raw.p - 1}")
        )

    event_times = [
        obs.time
        for cl in raw.clusters
        for obs in cl.observations
        if obs.status == 1
    ]
    uniq, counts = np.unique(np.asarray(event_times), return_counts=True)
    for t, c in zip(uniq, counts):
        if c > 1:
            violations.append(
                ("TiedEventTimes", f"{c} events share time {t!r}")
            )

    if violations:
        raise DataValidationError(violations)
    return raw


def pooled_event_times(data: SurvivalDataset) -> np.ndarray:
    """Sorted distinct times of all uncensored observations."""
    arr = data.to_arrays()
    if arr.n_events == 0:
        raise NoEvents()
    return arr.event_times


def break_ties(data: SurvivalDataset) -> SurvivalDataset:
    """Deterministically perturb tied event times.

    Within each tie set (ordered by cluster, then observation position) the
    k-th member gets ``k * eps`` added, ``eps = 1e-9 * median(time)``, so the
    first member is untouched and the no-ties invariant holds afterwards.
    """
    all_times = [o.time for c in data.clusters for o in c.observations]
    eps = 1e-9 * float(np.median(all_times))
    tie_rank: dict[float, int] = {}
    new_clusters = []
    for cl in data.clusters:
        new_obs = []
        for obs in cl.observations:
            if obs.status == 1:
                k = tie_rank.get(obs.time, 0)
                tie_rank[obs.time] = k + 1
                if k > 0:
                    obs = Observation(obs.time + k * eps, obs.status, obs.covariates)
            new_obs.append(obs)
        new_clusters.append(Cluster(cl.id, tuple(new_obs)))
    return SurvivalDataset(tuple(new_clusters), data.p, data.group_structure)


def standardize_columns(X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Column-wise (X - mean) / sd; constant columns keep sd = 1."""
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return (X - mu) / sd, mu, sd
