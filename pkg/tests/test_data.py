"""Domain types: array conversion, validation, tie breaking, grouping."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frailty_glasso import (Cluster, GroupStructure, Observation,
                            SurvivalDataset, break_ties, pooled_event_times,
                            validate_dataset)
from frailty_glasso.data import standardize_columns
from frailty_glasso.errors import DataValidationError, NoEvents


def _obs(time, status, p=2, fill=0.0):
    return Observation(time=time, status=status,
                       covariates=np.full(p, fill))


def _dataset(clusters, p=2, n_groups=1):
    return SurvivalDataset(tuple(clusters), p,
                           GroupStructure.contiguous(p, n_groups))


class TestGroupStructure:
    def test_contiguous_partitions(self):
        gs = GroupStructure.contiguous(10, 3)
        flat = [i for g in gs.groups for i in g]
        assert sorted(flat) == list(range(10))
        assert gs.n_groups == 3
        assert gs.p == 10
        # near-equal block sizes
        assert max(gs.sizes) - min(gs.sizes) <= 1

    def test_single_group(self):
        gs = GroupStructure.contiguous(4, 1)
        assert gs.groups == ((0, 1, 2, 3),)


class TestToArrays:
    def test_layout_and_counts(self):
        data = _dataset([
            Cluster("a", (_obs(1.0, 1), _obs(2.0, 0))),
            Cluster("b", (_obs(3.0, 1), _obs(0.5, 1), _obs(4.0, 0))),
        ])
        arr = data.to_arrays()
        assert arr.m == 5 and arr.n == 2
        assert arr.cluster_ids == ("a", "b")
        assert list(arr.cluster_index) == [0, 0, 1, 1, 1]
        assert list(arr.A) == [1, 2]
        assert list(arr.event_times) == [0.5, 1.0, 3.0]
        # event_pos counts pooled event times <= each observation time
        assert list(arr.event_pos) == [2, 2, 3, 1, 3]

    def test_cache_is_stable(self, small_data):
        assert small_data.to_arrays() is small_data.to_arrays()

    def test_subset_keeps_structure(self, small_data):
        sub = small_data.subset([0, 2])
        assert sub.n_clusters == 2
        assert sub.p == small_data.p
        assert sub.group_structure is small_data.group_structure
        assert sub.clusters[1] is small_data.clusters[2]


class TestValidation:
    def test_valid_dataset_round_trips(self, small_data):
        assert validate_dataset(small_data) is small_data

    @pytest.mark.parametrize("bad, code", [
        (_obs(-1.0, 1), "NonPositiveTime"),
        (_obs(float("nan"), 1), "NonPositiveTime"),
        (_obs(1.0, 2), "InvalidStatus"),
        (Observation(1.0, 1, np.zeros(3)), "DimensionMismatch"),
        (Observation(1.0, 1, np.array([0.0, np.inf])), "NonFiniteCovariate"),
    ])
    def test_single_violations(self, bad, code):
        data = _dataset([Cluster("a", (_obs(2.0, 1), bad))])
        with pytest.raises(DataValidationError) as err:
            validate_dataset(data)
        assert code in err.value.codes

    def test_empty_cluster(self):
        data = _dataset([Cluster("a", (_obs(1.0, 1),)), Cluster("b", ())])
        with pytest.raises(DataValidationError) as err:
            validate_dataset(data)
        assert "EmptyCluster" in err.value.codes

    def test_tied_event_times_rejected(self):
        data = _dataset([Cluster("a", (_obs(1.0, 1), _obs(1.0, 1)))])
        with pytest.raises(DataValidationError) as err:
            validate_dataset(data)
        assert err.value.codes == {"TiedEventTimes"}

    def test_censored_tie_with_event_is_fine(self):
        data = _dataset([Cluster("a", (_obs(1.0, 1), _obs(1.0, 0)))])
        assert validate_dataset(data) is data

    def test_group_partition_overlap_and_gap(self):
        data = SurvivalDataset(
            (Cluster("a", (_obs(1.0, 1, p=3),)),), 3,
            GroupStructure(((0, 1), (1,))))
        with pytest.raises(DataValidationError) as err:
            validate_dataset(data)
        assert "GroupPartitionInvalid" in err.value.codes

    def test_collects_multiple_violations(self):
        data = _dataset([Cluster("a", (_obs(-1.0, 1), _obs(1.0, 7)))])
        with pytest.raises(DataValidationError) as err:
            validate_dataset(data)
        assert {"NonPositiveTime", "InvalidStatus"} <= err.value.codes


class TestBreakTies:
    def test_resolves_event_ties(self):
        data = _dataset([
            Cluster("a", (_obs(1.0, 1), _obs(1.0, 1))),
            Cluster("b", (_obs(1.0, 1), _obs(1.0, 0))),
        ])
        fixed = break_ties(data)
        validate_dataset(fixed)
        times = [o.time for c in fixed.clusters for o in c.observations]
        # the first tie member keeps its exact time, censored rows untouched
        assert times[0] == 1.0
        assert times[3] == 1.0
        assert times[1] > 1.0 and times[2] > times[1]

    def test_noop_without_ties(self, small_data):
        fixed = break_ties(small_data)
        orig = [o.time for c in small_data.clusters for o in c.observations]
        new = [o.time for c in fixed.clusters for o in c.observations]
        assert orig == new


class TestHelpers:
    def test_pooled_event_times_sorted(self, small_data):
        ts = pooled_event_times(small_data)
        assert np.all(np.diff(ts) > 0)

    def test_pooled_event_times_requires_events(self):
        data = _dataset([Cluster("a", (_obs(1.0, 0),))])
        with pytest.raises(NoEvents):
            pooled_event_times(data)

    def test_standardize_columns(self):
        rng = np.random.default_rng(0)
        X = rng.normal(3.0, 2.0, size=(40, 3))
        X[:, 2] = 5.0  # constant column
        Xs, mu, sd = standardize_columns(X)
        assert np.allclose(Xs.mean(axis=0), 0.0, atol=1e-12)
        assert np.allclose(Xs.std(axis=0)[:2], 1.0)
        assert sd[2] == 1.0 and np.allclose(Xs[:, 2], 0.0)

    @settings(max_examples=25, deadline=None)
    @given(p=st.integers(1, 12), k=st.integers(1, 12))
    def test_contiguous_always_partitions(self, p, k):
        k = min(k, p)
        gs = GroupStructure.contiguous(p, k)
        flat = [i for g in gs.groups for i in g]
        assert sorted(flat) == list(range(p))
        assert all(len(g) >= 1 for g in gs.groups)
