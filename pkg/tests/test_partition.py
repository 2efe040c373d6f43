"""Tests for client partitioning and skew diagnostics."""

import numpy as np
import pytest

from fedhpo.datasets import generate_synthetic_industrial
from fedhpo.errors import ConfigError
from fedhpo.models import (
    AffineTransform,
    Dataset,
    ExplicitScheme,
    FeatureSkewScheme,
    LabelSkewScheme,
    PartitionSpec,
    QuantitySkewScheme,
    SplitRatios,
)
from fedhpo.partition import (
    empirical_distributions,
    partition,
    partition_feature_skew,
    partition_iid,
    skew_diagnostics,
)


def _dataset(num_classes=4, samples_per_class=25, feature_dim=3, seed=0):
    dataset, _ = generate_synthetic_industrial(
        num_classes=num_classes, samples_per_class=samples_per_class, feature_dim=feature_dim, seed=seed
    )
    return dataset


def _assert_partition(clients, dataset):
    ids = np.concatenate([c.all_data().sample_ids for c in clients])
    assert np.unique(ids).shape[0] == ids.shape[0]
    assert sorted(ids.tolist()) == dataset.sample_ids.tolist()


def test_iid_is_a_partition():
    """Test disjointness and coverage of the i.i.d. split."""
    dataset = _dataset()

    clients = partition_iid(dataset, PartitionSpec(client_count=4, seed=3))

    _assert_partition(clients, dataset)
    assert [c.client_id for c in clients] == [0, 1, 2, 3]
    assert [c.n_k for c in clients] == [25, 25, 25, 25]


def test_iid_remainder_goes_to_last_client():
    """Test uneven sample counts."""
    dataset = Dataset(features=np.zeros((103, 1)), labels=np.zeros(103, dtype=int), num_classes=1)

    clients = partition_iid(dataset, PartitionSpec(client_count=10))

    assert [c.n_k for c in clients] == [10] * 9 + [13]


def test_iid_split_ratios_within_one_sample():
    """Test train/valid/test sizes per client."""
    ratios = SplitRatios(train=0.6, valid=0.25, test=0.15)
    clients = partition_iid(_dataset(samples_per_class=37), PartitionSpec(client_count=3, split_ratios=ratios))

    for client in clients:
        assert abs(len(client.train) - 0.6 * client.n_k) <= 1
        assert abs(len(client.valid) - 0.25 * client.n_k) <= 1
        assert abs(len(client.test) - 0.15 * client.n_k) <= 1


def test_iid_rejects_too_few_samples():
    """Test N < K."""
    dataset = Dataset(features=np.zeros((2, 1)), labels=[0, 0], num_classes=1)

    with pytest.raises(ConfigError):
        partition_iid(dataset, PartitionSpec(client_count=3))


def test_iid_is_seeded():
    """Test determinism per seed."""
    dataset = _dataset()
    first = partition_iid(dataset, PartitionSpec(client_count=2, seed=5))
    second = partition_iid(dataset, PartitionSpec(client_count=2, seed=5))

    assert np.array_equal(first[0].train.sample_ids, second[0].train.sample_ids)


def test_label_skew_classes_per_client():
    """Test that every client holds exactly the requested number of classes."""
    dataset = _dataset(num_classes=6, samples_per_class=20)
    spec = PartitionSpec(scheme=LabelSkewScheme(classes_per_client=2), client_count=3, seed=2)

    clients = partition(dataset, spec)

    _assert_partition(clients, dataset)
    for client in clients:
        assert np.count_nonzero(client.all_data().label_counts()) == 2


def test_label_skew_rejects_uncovered_classes():
    """Test K * classes_per_client < C."""
    spec = PartitionSpec(scheme=LabelSkewScheme(classes_per_client=1), client_count=2)

    with pytest.raises(ConfigError, match="cannot cover"):
        partition(_dataset(num_classes=4), spec)


def test_label_skew_rejects_empty_class():
    """Test classes without samples."""
    dataset = Dataset(features=np.zeros((4, 1)), labels=[0, 0, 1, 1], num_classes=3)
    spec = PartitionSpec(scheme=LabelSkewScheme(classes_per_client=2), client_count=2)

    with pytest.raises(ConfigError, match="class 2"):
        partition(dataset, spec)


def test_label_skew_rejects_class_smaller_than_its_claimants():
    """Test a class with fewer samples than clients holding it."""
    dataset = Dataset(features=np.zeros((5, 1)), labels=[0, 0, 1, 1, 2], num_classes=3)
    spec = PartitionSpec(scheme=LabelSkewScheme(classes_per_client=2), client_count=3)

    with pytest.raises(ConfigError, match="class 2 has 1 samples for 2 clients"):
        partition(dataset, spec)


def test_quantity_skew_sizes():
    """Test floor(p_k * N) with the remainder to the last client."""
    dataset = _dataset(num_classes=4, samples_per_class=25)
    spec = PartitionSpec(scheme=QuantitySkewScheme(proportions=[0.5, 0.3, 0.2]), client_count=3)

    clients = partition(dataset, spec)

    _assert_partition(clients, dataset)
    assert [c.n_k for c in clients] == [50, 30, 20]


def test_quantity_skew_rejects_empty_client():
    """Test proportions that leave a client without samples."""
    dataset = _dataset(num_classes=2, samples_per_class=25)
    spec = PartitionSpec(scheme=QuantitySkewScheme(proportions=[0.98, 0.01, 0.01]), client_count=3)

    with pytest.raises(ConfigError, match="without samples"):
        partition(dataset, spec)


def test_feature_skew_identity_equals_iid():
    """Test that identity transforms reproduce the i.i.d. split exactly."""
    dataset = _dataset()
    scheme = FeatureSkewScheme(transforms=[AffineTransform(), AffineTransform()])

    skewed = partition_feature_skew(dataset, PartitionSpec(scheme=scheme, client_count=2, seed=4))
    plain = partition_iid(dataset, PartitionSpec(client_count=2, seed=4))

    for a, b in zip(skewed, plain):
        assert np.array_equal(a.train.features, b.train.features)
        assert np.array_equal(a.test.sample_ids, b.test.sample_ids)


def test_feature_skew_scale_and_offset():
    """Test the affine part of a transform."""
    dataset = _dataset()
    scheme = FeatureSkewScheme(transforms=[AffineTransform(), AffineTransform(scale=2.0, offset=1.0)])

    skewed = partition(dataset, PartitionSpec(scheme=scheme, client_count=2, seed=4))
    plain = partition_iid(dataset, PartitionSpec(client_count=2, seed=4))

    assert np.allclose(skewed[1].valid.features, plain[1].valid.features * 2.0 + 1.0)
    assert np.array_equal(skewed[1].valid.labels, plain[1].valid.labels)


def test_feature_skew_rotation_preserves_norms():
    """Test that a pure rotation keeps row norms and changes coordinates."""
    dataset = _dataset(feature_dim=4)
    scheme = FeatureSkewScheme(transforms=[AffineTransform(rotation_seed=9), AffineTransform()])

    skewed = partition(dataset, PartitionSpec(scheme=scheme, client_count=2))
    plain = partition_iid(dataset, PartitionSpec(client_count=2))

    rotated, original = skewed[0].train.features, plain[0].train.features
    assert np.allclose(np.linalg.norm(rotated, axis=1), np.linalg.norm(original, axis=1))
    assert not np.allclose(rotated, original)


def test_feature_skew_rotation_needs_two_dimensions():
    """Test the rotation dimension guard."""
    dataset = _dataset(feature_dim=1)
    scheme = FeatureSkewScheme(transforms=[AffineTransform(rotation_seed=1), AffineTransform()])

    with pytest.raises(ConfigError, match="two feature dimensions"):
        partition(dataset, PartitionSpec(scheme=scheme, client_count=2))


def test_explicit_assignment_with_label_permutation(tmp_path):
    """Test the assignment file and a same-features-different-label client."""
    dataset = _dataset(num_classes=2, samples_per_class=10)
    path = tmp_path / "assignment.csv"
    path.write_text("sampleIndex,clientId\n" + "".join(f"{i},{i % 2}\n" for i in range(20)))
    scheme = ExplicitScheme(assignment_path=path, label_permutations={1: [1, 0]})

    clients = partition(dataset, PartitionSpec(scheme=scheme, client_count=2))

    _assert_partition(clients, dataset)
    pooled = clients[1].all_data()
    assert np.all(pooled.sample_ids % 2 == 1)
    assert np.array_equal(pooled.labels, 1 - dataset.labels[pooled.sample_ids])


def test_explicit_assignment_must_cover_all_samples(tmp_path):
    """Test coverage validation of the assignment file."""
    dataset = _dataset(num_classes=2, samples_per_class=5)
    path = tmp_path / "assignment.csv"
    path.write_text("sampleIndex,clientId\n" + "".join(f"{i},{i % 2}\n" for i in range(9)))

    with pytest.raises(ConfigError, match="cover"):
        partition(dataset, PartitionSpec(scheme=ExplicitScheme(assignment_path=path), client_count=2))


def test_empirical_distributions_joint_identity():
    """Test P(x, y) = P(y | x) * P(x) against the counted joint."""
    dataset = _dataset(num_classes=3, samples_per_class=30)

    dists = empirical_distributions(dataset, bins=5)

    reconstructed = dists.conditional * dists.feature_marginal[..., None]
    assert np.max(np.abs(reconstructed - dists.joint())) < 1e-12
    assert dists.label_marginal.sum() == pytest.approx(1.0)
    assert np.allclose(dists.feature_marginal.sum(axis=1), 1.0)
    assert np.allclose(dists.feature_given_label().sum(axis=1), 1.0)


def test_empirical_distributions_guards():
    """Test empty input and bin count validation."""
    with pytest.raises(ValueError):
        empirical_distributions(_dataset(), bins=1)
    with pytest.raises(ValueError):
        empirical_distributions(_dataset().subset([]), bins=4)


def test_skew_diagnostics_iid():
    """Test that a large i.i.d. split raises no flags."""
    dataset = _dataset(num_classes=3, samples_per_class=600)

    report = skew_diagnostics(partition_iid(dataset, PartitionSpec(client_count=2)), bins=5)

    assert not report.label_skew
    assert not report.feature_skew
    assert not report.quantity_skew
    assert report.label_tv[0][1] == report.label_tv[1][0]


def test_skew_diagnostics_flags_each_skew():
    """Test label, feature and quantity flags."""
    dataset = _dataset(num_classes=2, samples_per_class=200)

    label = partition(dataset, PartitionSpec(scheme=LabelSkewScheme(classes_per_client=1), client_count=2))
    assert skew_diagnostics(label).label_skew

    feature = partition(
        dataset,
        PartitionSpec(
            scheme=FeatureSkewScheme(transforms=[AffineTransform(), AffineTransform(offset=20.0)]), client_count=2
        ),
    )
    assert skew_diagnostics(feature).feature_skew

    quantity = partition(dataset, PartitionSpec(scheme=QuantitySkewScheme(proportions=[0.8, 0.2]), client_count=2))
    report = skew_diagnostics(quantity)
    assert report.quantity_skew
    assert report.quantity_ratio == pytest.approx(4.0)


def test_label_tv_grows_with_label_skew():
    """Test that fewer classes per client never lowers the max pairwise label distance."""
    dataset = _dataset(num_classes=10, samples_per_class=100, feature_dim=2)

    distances = [
        skew_diagnostics(
            partition(dataset, PartitionSpec(scheme=LabelSkewScheme(classes_per_client=count), client_count=10, seed=3))
        ).max_label_tv
        for count in (10, 5, 2)
    ]

    assert distances == sorted(distances)
    assert distances[0] < 0.05
    assert distances[-1] == pytest.approx(1.0)
