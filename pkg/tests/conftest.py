"""Shared fixtures: a small synthetic task split over three clients."""

import pytest

from fedhpo.datasets import generate_synthetic_industrial
from fedhpo.models import Cohort, PartitionSpec
from fedhpo.network import init_params, mlp_network
from fedhpo.partition import partition_iid


@pytest.fixture
def small_dataset():
    dataset, _ = generate_synthetic_industrial(
        num_classes=3, samples_per_class=40, num_clients=1, feature_dim=4, separation=2.0, seed=0
    )
    return dataset


@pytest.fixture
def clients(small_dataset):
    return partition_iid(small_dataset, PartitionSpec(client_count=3, seed=1))


@pytest.fixture
def spec():
    return mlp_network(input_dim=4, num_classes=3, hidden_units=8)


@pytest.fixture
def w0(spec):
    return init_params(spec, seed=7)


@pytest.fixture
def cohort():
    return Cohort(cohort_id=0, members=[0, 1, 2])
