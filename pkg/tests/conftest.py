"""Shared fixtures: small simulated datasets sized for fast unit tests."""

import pytest

from frailty_glasso import SimConfig, simulate_dataset


@pytest.fixture(scope="session")
def small_truth():
    """6 clusters x 5 observations, p = 10 in 5 covariate groups."""
    return simulate_dataset(SimConfig(
        n_clusters=6, cluster_size=5, p=10, n_covariate_groups=5, seed=3))


@pytest.fixture(scope="session")
def small_data(small_truth):
    return small_truth.dataset


@pytest.fixture(scope="session")
def medium_truth():
    """10 clusters x 8 observations, p = 12 in 4 covariate groups."""
    return simulate_dataset(SimConfig(
        n_clusters=10, cluster_size=8, p=12, n_covariate_groups=4, seed=11))


@pytest.fixture(scope="session")
def medium_data(medium_truth):
    return medium_truth.dataset
