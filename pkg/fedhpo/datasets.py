"""Dataset sources: synthetic industrial-like clusters and IDX/CSV files."""

import csv
import gzip
import logging
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DataFormatError
from .models import CsvSource, Dataset, DatasetSource, IdxSource, SyntheticMetadata, SyntheticSource

logger = logging.getLogger(__name__)

IDX_UBYTE = 0x08


def generate_synthetic_industrial(
    num_classes: int = 6,
    samples_per_class: int = 512,
    num_clients: int = 1,
    feature_dim: int = 24,
    separation: float = 0.75,
    seed: int = 0,
) -> tuple[Dataset, SyntheticMetadata]:
    """Generate Gaussian class clusters with a shared within-class covariance.

    The first half of the classes are healthy operating states, the rest are
    anomalous ones.

    Args:
        num_classes: Number of operating conditions
        samples_per_class: Samples per class and per client
        num_clients: Number of clients the budget is sized for
        feature_dim: Feature dimension
        separation: Standard deviation of the class means (noise std is 1)
        seed: Random seed

    Returns:
        Tuple of (dataset, metadata); dataset rows are grouped by class

    Raises:
        ValueError: If fewer than two classes are requested
    """
    if num_classes < 2:
        raise ValueError("synthetic data needs at least two classes")
    rng = np.random.default_rng(seed)
    means = rng.normal(0.0, separation, size=(num_classes, feature_dim))
    per_class = samples_per_class * num_clients
    features = np.concatenate(
        [means[label] + rng.standard_normal((per_class, feature_dim)) for label in range(num_classes)]
    )
    labels = np.repeat(np.arange(num_classes), per_class)

    healthy = list(range((num_classes + 1) // 2))
    anomalous = list(range(len(healthy), num_classes))
    names = {label: f"healthy-{label}" for label in healthy}
    names.update({label: f"anomalous-{label - len(healthy)}" for label in anomalous})
    metadata = SyntheticMetadata(
        num_classes=num_classes,
        feature_dim=feature_dim,
        samples_per_class=samples_per_class,
        num_clients=num_clients,
        separation=separation,
        healthy_classes=healthy,
        anomalous_classes=anomalous,
        class_names=names,
    )
    return Dataset(features=features, labels=labels, num_classes=num_classes), metadata


def _open_binary(path: Path):
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_idx(path: Path) -> np.ndarray:
    with _open_binary(path) as f:
        raw = f.read()
    if len(raw) < 4:
        raise DataFormatError(f"{path}: expected a 4-byte IDX magic, file has {len(raw)} bytes")
    if raw[0] != 0 or raw[1] != 0:
        raise DataFormatError(f"{path}: bad IDX magic at byte 0 ({raw[:4].hex()})")
    if raw[2] != IDX_UBYTE:
        raise DataFormatError(f"{path}: unsupported IDX element type 0x{raw[2]:02x} at byte 2")
    ndim = raw[3]
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise DataFormatError(f"{path}: truncated IDX header, expected {header} bytes, got {len(raw)}")
    dims = [int(d) for d in np.frombuffer(raw, dtype=">u4", count=ndim, offset=4)]
    expected = header + int(np.prod(dims, dtype=np.int64))
    if len(raw) != expected:
        raise DataFormatError(f"{path}: IDX payload length mismatch, expected {expected} bytes, got {len(raw)}")
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def _check_labels(labels: np.ndarray, num_classes: Optional[int], where: str) -> int:
    if num_classes is None:
        return int(labels.max()) + 1 if labels.size else 1
    unknown = labels[(labels < 0) | (labels >= num_classes)]
    if unknown.size:
        raise DataFormatError(f"{where}: unknown label {int(unknown[0])} (expected 0..{num_classes - 1})")
    return num_classes


def load_idx(images_path: Path, labels_path: Path, num_classes: Optional[int] = None) -> Dataset:
    """Load an IDX image/label pair; bytes are scaled to [0, 1]."""
    images = _read_idx(Path(images_path))
    labels = _read_idx(Path(labels_path)).astype(np.int64).reshape(-1)
    if images.shape[0] != labels.shape[0]:
        raise DataFormatError(
            f"{images_path}: {images.shape[0]} images but {labels_path} holds {labels.shape[0]} labels"
        )
    num_classes = _check_labels(labels, num_classes, str(labels_path))
    features = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(features=features, labels=labels, num_classes=num_classes)


def load_csv(path: Path, num_classes: Optional[int] = None) -> Dataset:
    """Load a CSV with header `label,f0,f1,...`."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if not header or header[0] != "label":
            raise DataFormatError(f"{path}:1: header must start with 'label'")
        width = len(header)
        labels, rows = [], []
        for line_number, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise DataFormatError(f"{path}:{line_number}: expected {width} fields, got {len(row)}")
            try:
                label = int(row[0])
                rows.append([float(value) for value in row[1:]])
            except ValueError as e:
                raise DataFormatError(f"{path}:{line_number}: {e}") from e
            if label < 0 or (num_classes is not None and label >= num_classes):
                expected = "a non-negative label" if num_classes is None else f"0..{num_classes - 1}"
                raise DataFormatError(f"{path}:{line_number}: unknown label {label} (expected {expected})")
            labels.append(label)
    label_array = np.array(labels, dtype=np.int64)
    num_classes = _check_labels(label_array, num_classes, str(path))
    features = np.array(rows, dtype=np.float64).reshape(len(rows), width - 1)
    return Dataset(features=features, labels=label_array, num_classes=num_classes)


def load_dataset(
    path: Path,
    format: str,
    labels_path: Optional[Path] = None,
    num_classes: Optional[int] = None,
) -> Dataset:
    """Load a dataset file.

    Args:
        path: IDX image file or CSV file
        format: "idx" or "csv"
        labels_path: IDX label file (required for idx)
        num_classes: Label-space size; inferred from the data when omitted

    Returns:
        Parsed Dataset

    Raises:
        DataFormatError: On malformed input
        ValueError: On an unknown format or missing labels path
    """
    if format == "idx":
        if labels_path is None:
            raise ValueError("idx format needs a labels_path")
        return load_idx(path, labels_path, num_classes)
    if format == "csv":
        return load_csv(path, num_classes)
    raise ValueError(f"unknown dataset format: {format}")


def load_source(source: DatasetSource, num_clients: int, seed: int) -> Dataset:
    """Materialize the dataset a config points at."""
    if isinstance(source, SyntheticSource):
        dataset, metadata = generate_synthetic_industrial(
            num_classes=source.num_classes,
            samples_per_class=source.samples_per_class,
            num_clients=num_clients,
            feature_dim=source.feature_dim,
            separation=source.separation,
            seed=seed,
        )
        logger.debug("generated %d synthetic samples (%s)", len(dataset), metadata.class_names)
        return dataset
    if isinstance(source, IdxSource):
        return load_idx(source.path, source.labels_path, source.num_classes)
    if isinstance(source, CsvSource):
        return load_csv(source.path, source.num_classes)
    raise ValueError(f"unsupported dataset source {source!r}")


def save_csv(dataset: Dataset, path: Path) -> Path:
    """Write a dataset in the `label,f0,...` CSV layout (LF line endings)."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["label", *(f"f{j}" for j in range(dataset.num_features))])
        for label, row in zip(dataset.labels, dataset.features):
            writer.writerow([int(label), *(repr(float(value)) for value in row)])
    return path
