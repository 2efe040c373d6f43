"""Dense neural-network engine: loss, backpropagation, local SGD and evaluation."""

import logging
import math
from typing import Optional

import numpy as np

from .errors import DivergenceError
from .models import (
    Activation,
    ActivationLayer,
    Dataset,
    DenseLayer,
    DropoutLayer,
    DropoutMode,
    ModelChoice,
    ModelSpec,
    TrainConfig,
)
from .seeding import make_rng

logger = logging.getLogger(__name__)

# Flattened model parameters; always a read-only float64 vector.
ParamVector = np.ndarray

PROBABILITY_FLOOR = 1e-12


def industrial_network(
    input_dim: int = 24,
    num_classes: int = 6,
    hidden_units: int = 64,
    dropout_rate: float = 0.4,
) -> ModelSpec:
    """Dense-64/ReLU, dropout, dense-6, dropout, softmax."""
    return ModelSpec(
        layers=[
            DenseLayer(in_features=input_dim, out_features=hidden_units),
            ActivationLayer(function=Activation.RELU),
            DropoutLayer(rate=dropout_rate),
            DenseLayer(in_features=hidden_units, out_features=num_classes),
            DropoutLayer(rate=dropout_rate),
            ActivationLayer(function=Activation.SOFTMAX),
        ]
    )


def mlp_network(input_dim: int = 784, num_classes: int = 10, hidden_units: int = 128) -> ModelSpec:
    """One hidden ReLU layer; stands in for the MNIST CNN."""
    return ModelSpec(
        layers=[
            DenseLayer(in_features=input_dim, out_features=hidden_units),
            ActivationLayer(function=Activation.RELU),
            DenseLayer(in_features=hidden_units, out_features=num_classes),
            ActivationLayer(function=Activation.SOFTMAX),
        ]
    )


def build_model_spec(choice: ModelChoice, input_dim: int, num_classes: int) -> ModelSpec:
    """Resolve a config model block against the dataset dimensions.

    Args:
        choice: Preset name or inline layers
        input_dim: Feature dimension of the data
        num_classes: Size of the label space

    Returns:
        Validated ModelSpec

    Raises:
        ValueError: If inline layers do not match the data
    """
    if choice.layers is not None:
        spec = ModelSpec(layers=choice.layers)
        if spec.input_dim != input_dim or spec.num_classes != num_classes:
            raise ValueError(
                f"model expects {spec.input_dim} features / {spec.num_classes} classes, "
                f"data has {input_dim} / {num_classes}"
            )
        return spec
    if choice.preset == "industrial":
        return industrial_network(input_dim, num_classes, choice.hidden_units, choice.dropout_rate)
    return mlp_network(input_dim, num_classes, choice.hidden_units)


def freeze_params(values: np.ndarray) -> ParamVector:
    vector = np.array(values, dtype=np.float64)
    vector.setflags(write=False)
    return vector


def init_params(spec: ModelSpec, seed: int) -> ParamVector:
    """Draw initial parameters w_0.

    Weights are uniform on +-sqrt(6 / (fan_in + fan_out)); biases are zero.
    """
    rng = np.random.default_rng(seed)
    chunks = []
    for layer in spec.dense_layers:
        limit = math.sqrt(6.0 / (layer.in_features + layer.out_features))
        chunks.append(rng.uniform(-limit, limit, size=(layer.in_features, layer.out_features)).ravel())
        chunks.append(np.zeros(layer.out_features))
    return freeze_params(np.concatenate(chunks))


def unflatten(spec: ModelSpec, w: ParamVector) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split a parameter vector into per-layer (weights, bias) views."""
    if w.shape != (spec.parameter_count,):
        raise ValueError(f"parameter vector has shape {w.shape}, model needs ({spec.parameter_count},)")
    params = []
    offset = 0
    for layer in spec.dense_layers:
        size = layer.in_features * layer.out_features
        weights = w[offset : offset + size].reshape(layer.in_features, layer.out_features)
        offset += size
        bias = w[offset : offset + layer.out_features]
        offset += layer.out_features
        params.append((weights, bias))
    return params


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def _forward(
    spec: ModelSpec,
    w: ParamVector,
    features: np.ndarray,
    dropout_rng: Optional[np.random.Generator] = None,
) -> tuple[np.ndarray, list]:
    params = iter(unflatten(spec, w))
    activations = features
    cache = []
    for layer in spec.layers:
        if isinstance(layer, DenseLayer):
            weights, bias = next(params)
            cache.append((layer, activations, weights))
            activations = activations @ weights + bias
        elif isinstance(layer, DropoutLayer):
            if dropout_rng is None or layer.rate == 0.0:
                continue
            keep = dropout_rng.random(activations.shape) >= layer.rate
            mask = keep / (1.0 - layer.rate)
            cache.append((layer, None, mask))
            activations = activations * mask
        elif layer.function is Activation.RELU:
            cache.append((layer, activations, None))
            activations = np.maximum(activations, 0.0)
        else:
            activations = softmax(activations)
    return activations, cache


def predict_proba(spec: ModelSpec, w: ParamVector, features: np.ndarray) -> np.ndarray:
    """Class probabilities with dropout disabled."""
    probs, _ = _forward(spec, w, features)
    return probs


def _require_samples(data: Dataset, operation: str) -> None:
    if len(data) == 0:
        raise ValueError(f"{operation} requires a non-empty dataset")


def _loss_arrays(spec, w, features, labels, dropout_rng=None) -> float:
    probs, _ = _forward(spec, w, features, dropout_rng)
    picked = np.clip(probs[np.arange(labels.shape[0]), labels], PROBABILITY_FLOOR, 1.0)
    return float(-np.mean(np.log(picked)))


def loss(
    spec: ModelSpec,
    w: ParamVector,
    batch: Dataset,
    dropout_rng: Optional[np.random.Generator] = None,
) -> float:
    """Mean cross-entropy of the softmax outputs.

    Probabilities are clamped to [1e-12, 1] before the log.
    """
    _require_samples(batch, "loss")
    return _loss_arrays(spec, w, batch.features, batch.labels, dropout_rng)


def _gradient_arrays(spec, w, features, labels, dropout_rng=None) -> np.ndarray:
    probs, cache = _forward(spec, w, features, dropout_rng)
    n = labels.shape[0]
    rows = np.arange(n)
    delta = probs.copy()
    delta[rows, labels] -= 1.0
    # the clamp is flat below the floor
    delta[probs[rows, labels] < PROBABILITY_FLOOR] = 0.0
    delta /= n

    grads = []
    for layer, inputs, aux in reversed(cache):
        if isinstance(layer, DenseLayer):
            grads.append((inputs.T @ delta, delta.sum(axis=0)))
            delta = delta @ aux.T
        elif isinstance(layer, DropoutLayer):
            delta = delta * aux
        else:
            delta = delta * (inputs > 0)
    grads.reverse()
    return np.concatenate([part for weights, bias in grads for part in (weights.ravel(), bias)])


def gradient(
    spec: ModelSpec,
    w: ParamVector,
    batch: Dataset,
    dropout_rng: Optional[np.random.Generator] = None,
) -> ParamVector:
    """Gradient of `loss` with respect to w for the realized dropout mask."""
    _require_samples(batch, "gradient")
    return freeze_params(_gradient_arrays(spec, w, batch.features, batch.labels, dropout_rng))


def count_steps(n_samples: int, cfg: TrainConfig) -> int:
    """Number of SGD steps ClientUpdate performs: E * ceil(n / B)."""
    return cfg.epochs * math.ceil(n_samples / cfg.batch_size)


def client_update(
    spec: ModelSpec,
    client_id: int,
    w0: ParamVector,
    cfg: TrainConfig,
    data: Dataset,
) -> ParamVector:
    """Run E epochs of mini-batch SGD starting from w0.

    Each epoch shuffles with a stream keyed by (seed, client id, global epoch);
    the final partial batch is kept.

    Args:
        spec: Network architecture
        client_id: Client identifier (keys the random streams)
        w0: Start parameters
        cfg: Learning rate, epochs, batch size, seed and dropout mode
        data: Client training data

    Returns:
        Updated parameter vector

    Raises:
        ValueError: If data is empty
        DivergenceError: If parameters become non-finite
    """
    _require_samples(data, "client_update")
    w = np.array(w0, dtype=np.float64)
    features, labels = data.features, data.labels
    n = len(data)
    step = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for local_epoch in range(cfg.epochs):
            epoch = cfg.epoch_offset + local_epoch
            order = make_rng(cfg.seed, "shuffle", client_id, epoch).permutation(n)
            dropout_rng = None
            if cfg.dropout is DropoutMode.ENABLED:
                dropout_rng = make_rng(cfg.seed, "dropout", client_id, epoch)
            for start in range(0, n, cfg.batch_size):
                batch = order[start : start + cfg.batch_size]
                grad = _gradient_arrays(spec, w, features[batch], labels[batch], dropout_rng)
                w -= cfg.learning_rate * grad
                step += 1
                if not np.all(np.isfinite(w)):
                    raise DivergenceError(client_id, step)
    return freeze_params(w)


def accuracy(spec: ModelSpec, w: ParamVector, data: Dataset) -> float:
    """Fraction of argmax predictions equal to the labels (ties -> lowest class id)."""
    _require_samples(data, "accuracy")
    predictions = np.argmax(predict_proba(spec, w, data.features), axis=1)
    return float(np.mean(predictions == data.labels))


def train_loss(spec: ModelSpec, w: ParamVector, data: Dataset) -> float:
    """Evaluation-mode loss (dropout off)."""
    _require_samples(data, "train_loss")
    return _loss_arrays(spec, w, data.features, data.labels)
