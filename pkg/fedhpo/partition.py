"""Per-client partitioning and non-i.i.d. diagnostics.

Every partitioner returns a true partition of the input: client splits are
pairwise disjoint and their union is the input dataset.
"""

import csv
import logging
import math
from itertools import combinations
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError, DataFormatError
from .models import (
    AffineTransform,
    ClientDataset,
    Dataset,
    EmpiricalDistributions,
    ExplicitScheme,
    FeatureSkewScheme,
    IidScheme,
    LabelSkewScheme,
    PartitionSpec,
    QuantitySkewScheme,
    SkewReport,
    SkewThresholds,
    SplitRatios,
)
from .seeding import make_rng

logger = logging.getLogger(__name__)


def split_client(client_id: int, data: Dataset, ratios: SplitRatios, seed: int) -> ClientDataset:
    """Shuffle one client's samples and cut them into train/valid/test."""
    n = len(data)
    order = make_rng(seed, "split", client_id).permutation(n)
    n_train = min(int(round(n * ratios.train)), n)
    n_valid = min(int(round(n * ratios.valid)), n - n_train)
    return ClientDataset(
        client_id=client_id,
        train=data.subset(order[:n_train]),
        valid=data.subset(order[n_train : n_train + n_valid]),
        test=data.subset(order[n_train + n_valid :]),
    )


def _build_clients(data: Dataset, chunks: list[np.ndarray], spec: PartitionSpec) -> list[ClientDataset]:
    return [
        split_client(client_id, data.subset(chunk), spec.split_ratios, spec.seed)
        for client_id, chunk in enumerate(chunks)
    ]


def partition_iid(data: Dataset, spec: PartitionSpec) -> list[ClientDataset]:
    """Seeded global shuffle, then contiguous equal slices.

    Remainder samples go to the last client.
    """
    k = spec.client_count
    n = len(data)
    if n < k:
        raise ConfigError(f"cannot split {n} samples over {k} clients")
    order = make_rng(spec.seed, "partition").permutation(n)
    size = n // k
    chunks = [order[i * size : (i + 1) * size] for i in range(k - 1)]
    chunks.append(order[(k - 1) * size :])
    return _build_clients(data, chunks, spec)


def partition_label_skew(data: Dataset, spec: PartitionSpec) -> list[ClientDataset]:
    """Give every client exactly `classes_per_client` classes.

    Classes are claimed round-robin over a seeded class ordering; each class's
    samples are split evenly among its claimants.
    """
    scheme = spec.scheme
    if not isinstance(scheme, LabelSkewScheme):
        raise ConfigError("label-skew partitioning needs a label_skew scheme")
    k = spec.client_count
    num_classes = data.num_classes
    per_client = scheme.classes_per_client
    if per_client > num_classes:
        raise ConfigError(f"classes_per_client={per_client} exceeds {num_classes} classes")
    counts = data.label_counts()
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise ConfigError(f"class {int(empty[0])} has no samples")
    if k * per_client < num_classes:
        raise ConfigError(
            f"{k} clients x {per_client} classes cannot cover {num_classes} classes; "
            "some samples would be unassigned"
        )

    class_order = make_rng(spec.seed, "label-skew").permutation(num_classes)
    claims = {client: [int(class_order[(client * per_client + j) % num_classes]) for j in range(per_client)]
              for client in range(k)}
    claimants: dict[int, list[int]] = {c: [] for c in range(num_classes)}
    for client, classes in claims.items():
        for c in classes:
            claimants[c].append(client)

    chunks: list[list[np.ndarray]] = [[] for _ in range(k)]
    for c in range(num_classes):
        members = np.flatnonzero(data.labels == c)
        if members.shape[0] < len(claimants[c]):
            raise ConfigError(
                f"class {c} has {members.shape[0]} samples for {len(claimants[c])} clients; "
                "every client needs at least one sample of each class it holds"
            )
        members = members[make_rng(spec.seed, "label-shard", c).permutation(members.shape[0])]
        for client, shard in zip(claimants[c], np.array_split(members, len(claimants[c]))):
            chunks[client].append(shard)
    return _build_clients(data, [np.concatenate(parts) for parts in chunks], spec)


def partition_quantity_skew(data: Dataset, spec: PartitionSpec) -> list[ClientDataset]:
    """Client k receives floor(p_k * N) shuffled samples; remainder to the last."""
    scheme = spec.scheme
    if not isinstance(scheme, QuantitySkewScheme):
        raise ConfigError("quantity-skew partitioning needs a quantity_skew scheme")
    n = len(data)
    sizes = [math.floor(p * n + 1e-9) for p in scheme.proportions[:-1]]
    sizes.append(n - sum(sizes))
    if min(sizes) <= 0:
        raise ConfigError(f"proportions {scheme.proportions} leave a client without samples (N={n})")
    order = make_rng(spec.seed, "partition").permutation(n)
    bounds = np.cumsum([0, *sizes])
    chunks = [order[bounds[i] : bounds[i + 1]] for i in range(len(sizes))]
    return _build_clients(data, chunks, spec)


def apply_transform(features: np.ndarray, transform: AffineTransform) -> np.ndarray:
    """Rotate in a seeded 2-D feature subspace, then scale and offset."""
    if transform.is_identity:
        return features
    out = np.array(features, dtype=np.float64)
    if transform.rotation_seed is not None:
        dims = out.shape[1]
        if dims < 2:
            raise ConfigError("rotation needs at least two feature dimensions")
        rng = np.random.default_rng(transform.rotation_seed)
        i, j = rng.choice(dims, size=2, replace=False)
        theta = rng.uniform(0.0, 2.0 * math.pi)
        cos, sin = math.cos(theta), math.sin(theta)
        xi, xj = out[:, i].copy(), out[:, j].copy()
        out[:, i] = cos * xi - sin * xj
        out[:, j] = sin * xi + cos * xj
    return out * transform.scale + transform.offset


def _transform_client(client: ClientDataset, transform: AffineTransform) -> ClientDataset:
    if transform.is_identity:
        return client
    return ClientDataset(
        client_id=client.client_id,
        train=client.train.with_features(apply_transform(client.train.features, transform)),
        valid=client.valid.with_features(apply_transform(client.valid.features, transform)),
        test=client.test.with_features(apply_transform(client.test.features, transform)),
    )


def partition_feature_skew(data: Dataset, spec: PartitionSpec) -> list[ClientDataset]:
    """I.i.d. split, then each client's features pass through its own transform."""
    scheme = spec.scheme
    if not isinstance(scheme, FeatureSkewScheme):
        raise ConfigError("feature-skew partitioning needs a feature_skew scheme")
    if data.num_features < 2 and any(t.rotation_seed is not None for t in scheme.transforms):
        raise ConfigError("rotation needs at least two feature dimensions")
    clients = partition_iid(data, spec)
    return [_transform_client(client, transform) for client, transform in zip(clients, scheme.transforms)]


def read_assignment(path: Path) -> dict[int, int]:
    """Parse an assignment CSV `sampleIndex,clientId`."""
    assignment: dict[int, int] = {}
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["sampleIndex", "clientId"]:
            raise DataFormatError(f"{path}:1: header must be 'sampleIndex,clientId'")
        for line_number, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise DataFormatError(f"{path}:{line_number}: expected 2 fields, got {len(row)}")
            try:
                index, client = int(row[0]), int(row[1])
            except ValueError as e:
                raise DataFormatError(f"{path}:{line_number}: {e}") from e
            if index in assignment:
                raise DataFormatError(f"{path}:{line_number}: sample {index} assigned twice")
            assignment[index] = client
    return assignment


def partition_explicit(data: Dataset, spec: PartitionSpec) -> list[ClientDataset]:
    """Follow an assignment file; optionally permute labels per client."""
    scheme = spec.scheme
    if not isinstance(scheme, ExplicitScheme):
        raise ConfigError("explicit partitioning needs an explicit scheme")
    assignment = read_assignment(scheme.assignment_path)
    n = len(data)
    if set(assignment) != set(range(n)):
        missing = sorted(set(range(n)) - set(assignment))[:5]
        raise ConfigError(f"assignment must cover samples 0..{n - 1} exactly (e.g. missing {missing})")
    indices = np.arange(n)
    owners = np.array([assignment[i] for i in range(n)])
    unknown = set(owners.tolist()) - set(range(spec.client_count))
    if unknown:
        raise ConfigError(f"assignment names unknown clients {sorted(unknown)}")
    chunks = []
    for client in range(spec.client_count):
        chunk = indices[owners == client]
        if chunk.size == 0:
            raise ConfigError(f"assignment gives client {client} no samples")
        chunks.append(chunk)

    clients = _build_clients(data, chunks, spec)
    for client_id, permutation in scheme.label_permutations.items():
        if sorted(permutation) != list(range(data.num_classes)):
            raise ConfigError(f"label permutation for client {client_id} is not a permutation")
        mapping = np.array(permutation)
        client = clients[client_id]
        clients[client_id] = ClientDataset(
            client_id=client_id,
            train=client.train.with_labels(mapping[client.train.labels]),
            valid=client.valid.with_labels(mapping[client.valid.labels]),
            test=client.test.with_labels(mapping[client.test.labels]),
        )
    return clients


def partition(data: Dataset, spec: PartitionSpec) -> list[ClientDataset]:
    """Dispatch on the partition scheme."""
    scheme = spec.scheme
    if isinstance(scheme, IidScheme):
        clients = partition_iid(data, spec)
    elif isinstance(scheme, LabelSkewScheme):
        clients = partition_label_skew(data, spec)
    elif isinstance(scheme, QuantitySkewScheme):
        clients = partition_quantity_skew(data, spec)
    elif isinstance(scheme, FeatureSkewScheme):
        clients = partition_feature_skew(data, spec)
    else:
        clients = partition_explicit(data, spec)
    logger.debug("partitioned %d samples into %s", len(data), [c.n_k for c in clients])
    return clients


def global_bin_edges(features: np.ndarray, bins: int) -> np.ndarray:
    """Equal-width edges per dimension from the global min/max."""
    lo = features.min(axis=0)
    hi = features.max(axis=0)
    hi = np.where(hi > lo, hi, lo + 1.0)
    steps = np.linspace(0.0, 1.0, bins + 1)
    return lo[:, None] + (hi - lo)[:, None] * steps[None, :]


def empirical_distributions(ds: Dataset, bins: int, edges: Optional[np.ndarray] = None) -> EmpiricalDistributions:
    """Histogram estimates of P_Y, P_X and P_{Y|X}.

    Args:
        ds: Dataset to describe
        bins: Bins per feature dimension
        edges: Shared bin edges (dims, bins + 1); computed from ds when omitted

    Returns:
        EmpiricalDistributions; the joint counts satisfy P_{X,Y} = P_{Y|X} * P_X exactly

    Raises:
        ValueError: If ds is empty or bins < 2
    """
    if len(ds) == 0:
        raise ValueError("empirical distributions need a non-empty dataset")
    if bins < 2:
        raise ValueError("need at least two bins")
    if edges is None:
        edges = global_bin_edges(ds.features, bins)
    n, dims = ds.features.shape
    bin_index = np.empty((n, dims), dtype=np.int64)
    for j in range(dims):
        bin_index[:, j] = np.searchsorted(edges[j, 1:-1], ds.features[:, j], side="right")

    counts = np.zeros((dims, bins, ds.num_classes), dtype=np.int64)
    dim_index = np.broadcast_to(np.arange(dims), (n, dims))
    label_index = np.broadcast_to(ds.labels[:, None], (n, dims))
    np.add.at(counts, (dim_index.ravel(), bin_index.ravel(), label_index.ravel()), 1)

    occupied = counts.sum(axis=2, keepdims=True)
    conditional = np.where(occupied > 0, counts / np.maximum(occupied, 1), 0.0)
    return EmpiricalDistributions(
        counts=counts,
        bin_edges=edges,
        label_marginal=ds.label_counts() / n,
        feature_marginal=occupied[..., 0] / n,
        conditional=conditional,
    )


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return float(0.5 * np.abs(p - q).sum())


def skew_diagnostics(
    clients: list[ClientDataset],
    bins: int = 10,
    thresholds: Optional[SkewThresholds] = None,
) -> SkewReport:
    """Pairwise label/feature total-variation distances and skew flags."""
    if len(clients) < 2:
        raise ValueError("skew diagnostics need at least two clients")
    thresholds = thresholds or SkewThresholds()
    pooled = [client.all_data() for client in clients]
    edges = global_bin_edges(np.concatenate([d.features for d in pooled]), bins)
    dists = [empirical_distributions(d, bins, edges) for d in pooled]

    size = len(clients)
    label_tv = np.zeros((size, size))
    feature_tv = np.zeros((size, size))
    for a, b in combinations(range(size), 2):
        label_tv[a, b] = label_tv[b, a] = total_variation(dists[a].label_marginal, dists[b].label_marginal)
        per_dim = 0.5 * np.abs(dists[a].feature_marginal - dists[b].feature_marginal).sum(axis=1)
        feature_tv[a, b] = feature_tv[b, a] = float(per_dim.mean())

    sizes = {client.client_id: client.n_k for client in clients}
    ratio = max(sizes.values()) / min(sizes.values())
    return SkewReport(
        client_ids=[client.client_id for client in clients],
        sizes=sizes,
        label_tv=label_tv.tolist(),
        feature_tv=feature_tv.tolist(),
        max_label_tv=float(label_tv.max()),
        max_feature_tv=float(feature_tv.max()),
        quantity_ratio=ratio,
        label_skew=bool(label_tv.max() > thresholds.label_tv),
        feature_skew=bool(feature_tv.max() > thresholds.feature_tv),
        quantity_skew=ratio > thresholds.quantity_ratio,
    )
