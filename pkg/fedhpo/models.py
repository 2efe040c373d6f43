"""Data models for fed-hpo."""

import math
from enum import Enum
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

SUM_TOLERANCE = 1e-9
PAPER_GRID = [0.0001, 0.001, 0.01, 0.1]


class Activation(str, Enum):
    """Supported activation functions."""

    RELU = "relu"
    SOFTMAX = "softmax"


class DropoutMode(str, Enum):
    """Whether dropout layers are active during training."""

    ENABLED = "enabled"
    DISABLED = "disabled"


class Regime(str, Enum):
    """Where hyperparameters are optimized."""

    LOCAL = "local"
    GLOBAL = "global"


class Strategy(str, Enum):
    """Hyperparameter search algorithm."""

    GRID = "grid"
    BAYESIAN = "bayesian"


class Approach(str, Enum):
    """Result-table column labels."""

    GLOBAL_GRID = "globalGrid"
    LOCAL_GRID = "localGrid"
    GLOBAL_BAYES = "globalBayes"
    LOCAL_BAYES = "localBayes"
    INDIVIDUAL = "individual"
    CENTRAL = "central"
    FEDERATED = "federated"

    @classmethod
    def for_hpo(cls, regime: Regime, strategy: Strategy) -> "Approach":
        """Map a (regime, strategy) pair onto its result column."""
        return {
            (Regime.GLOBAL, Strategy.GRID): cls.GLOBAL_GRID,
            (Regime.LOCAL, Strategy.GRID): cls.LOCAL_GRID,
            (Regime.GLOBAL, Strategy.BAYESIAN): cls.GLOBAL_BAYES,
            (Regime.LOCAL, Strategy.BAYESIAN): cls.LOCAL_BAYES,
        }[(regime, strategy)]


class InitDesign(str, Enum):
    """Placement of the initial Bayesian-optimization points."""

    CENTERED = "centered"
    LATIN = "latin"


class ArtifactKind(str, Enum):
    """Kind of run stored in a RunArtifact."""

    HPO = "hpo"
    BASELINES = "baselines"


# ---------------------------------------------------------------------------
# Network
# ---------------------------------------------------------------------------


class DenseLayer(BaseModel):
    """Fully connected layer."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["dense"] = "dense"
    in_features: int = Field(gt=0)
    out_features: int = Field(gt=0)


class ActivationLayer(BaseModel):
    """Element-wise (relu) or row-wise (softmax) activation."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["activation"] = "activation"
    function: Activation


class DropoutLayer(BaseModel):
    """Inverted dropout; identity at evaluation time."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["dropout"] = "dropout"
    rate: float = Field(ge=0.0, lt=1.0)


Layer = Annotated[Union[DenseLayer, ActivationLayer, DropoutLayer], Field(discriminator="kind")]


class ModelSpec(BaseModel):
    """Ordered layer stack of a dense classifier."""

    model_config = ConfigDict(frozen=True)

    layers: list[Layer]

    @model_validator(mode="after")
    def _check_layers(self) -> "ModelSpec":
        dense = self.dense_layers
        if not dense:
            raise ValueError("model needs at least one dense layer")
        for index, (previous, current) in enumerate(zip(dense, dense[1:]), start=1):
            if previous.out_features != current.in_features:
                raise ValueError(
                    f"dense layer {index} has in_features={current.in_features} but the "
                    f"previous dense layer outputs {previous.out_features}"
                )
        last = self.layers[-1]
        if not (isinstance(last, ActivationLayer) and last.function is Activation.SOFTMAX):
            raise ValueError("final layer must be a softmax activation")
        for layer in self.layers[:-1]:
            if isinstance(layer, ActivationLayer) and layer.function is Activation.SOFTMAX:
                raise ValueError("softmax is only allowed as the final layer")
        return self

    @property
    def dense_layers(self) -> list[DenseLayer]:
        return [layer for layer in self.layers if isinstance(layer, DenseLayer)]

    @property
    def input_dim(self) -> int:
        return self.dense_layers[0].in_features

    @property
    def num_classes(self) -> int:
        return self.dense_layers[-1].out_features

    @property
    def parameter_count(self) -> int:
        return sum(layer.in_features * layer.out_features + layer.out_features for layer in self.dense_layers)

    def without_dropout(self) -> "ModelSpec":
        """Return the same stack with dropout layers removed."""
        return ModelSpec(layers=[layer for layer in self.layers if not isinstance(layer, DropoutLayer)])


class TrainConfig(BaseModel):
    """Local SGD settings for one ClientUpdate."""

    model_config = ConfigDict(frozen=True)

    learning_rate: float = Field(ge=0.0, description="SGD step size eta")
    epochs: int = Field(default=1, ge=1)
    batch_size: int = Field(default=128, ge=1)
    seed: int = 0
    dropout: DropoutMode = DropoutMode.ENABLED
    epoch_offset: int = Field(default=0, ge=0, description="Global index of the first local epoch")


# ---------------------------------------------------------------------------
# Data
# ---------------------------------------------------------------------------


def _read_only(array: np.ndarray) -> np.ndarray:
    if array.flags.writeable:
        array = array.copy()
        array.setflags(write=False)
    return array


class Dataset(BaseModel):
    """Labeled samples; rows of `features` align with `labels`."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    features: np.ndarray
    labels: np.ndarray
    num_classes: int = Field(gt=0)
    sample_ids: Optional[np.ndarray] = None

    @model_validator(mode="before")
    @classmethod
    def _default_ids(cls, data):
        if isinstance(data, dict) and data.get("sample_ids") is None:
            data = {**data, "sample_ids": np.arange(len(np.asarray(data.get("labels", []))))}
        return data

    @field_validator("features", mode="before")
    @classmethod
    def _as_features(cls, value) -> np.ndarray:
        array = np.asarray(value, dtype=np.float64)
        if array.ndim != 2:
            raise ValueError(f"features must be a 2-D matrix, got {array.ndim} dimension(s)")
        return _read_only(array)

    @field_validator("labels", "sample_ids", mode="before")
    @classmethod
    def _as_ids(cls, value) -> np.ndarray:
        array = np.asarray(value)
        if array.size and not np.issubdtype(array.dtype, np.integer):
            raise ValueError("labels and sample ids must be integers")
        array = array.astype(np.int64, copy=False).reshape(-1)
        return _read_only(array)

    @model_validator(mode="after")
    def _check_shapes(self) -> "Dataset":
        rows = self.features.shape[0]
        if self.labels.shape[0] != rows:
            raise ValueError(f"{rows} feature rows but {self.labels.shape[0]} labels")
        if self.sample_ids.shape[0] != rows:
            raise ValueError(f"{rows} feature rows but {self.sample_ids.shape[0]} sample ids")
        if rows and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        return self

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def num_features(self) -> int:
        return int(self.features.shape[1])

    def subset(self, indices) -> "Dataset":
        """Select rows by position."""
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(
            features=self.features[indices],
            labels=self.labels[indices],
            num_classes=self.num_classes,
            sample_ids=self.sample_ids[indices],
        )

    def with_features(self, features: np.ndarray) -> "Dataset":
        return Dataset(features=features, labels=self.labels, num_classes=self.num_classes, sample_ids=self.sample_ids)

    def with_labels(self, labels: np.ndarray) -> "Dataset":
        return Dataset(features=self.features, labels=labels, num_classes=self.num_classes, sample_ids=self.sample_ids)

    def label_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    @classmethod
    def concat(cls, datasets: list["Dataset"]) -> "Dataset":
        """Stack datasets sharing feature dimension and label space."""
        if not datasets:
            raise ValueError("nothing to concatenate")
        first = datasets[0]
        for other in datasets[1:]:
            if other.num_classes != first.num_classes or other.num_features != first.num_features:
                raise ValueError("datasets disagree on feature dimension or label space")
        return cls(
            features=np.concatenate([d.features for d in datasets], axis=0),
            labels=np.concatenate([d.labels for d in datasets]),
            num_classes=first.num_classes,
            sample_ids=np.concatenate([d.sample_ids for d in datasets]),
        )


class ClientDataset(BaseModel):
    """One client's train/valid/test splits."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    client_id: int
    train: Dataset
    valid: Dataset
    test: Dataset

    @model_validator(mode="after")
    def _check_disjoint(self) -> "ClientDataset":
        splits = [self.train.sample_ids, self.valid.sample_ids, self.test.sample_ids]
        merged = np.concatenate(splits)
        if np.unique(merged).shape[0] != merged.shape[0]:
            raise ValueError(f"client {self.client_id} splits overlap")
        return self

    @property
    def n_k(self) -> int:
        return len(self.train) + len(self.valid) + len(self.test)

    @property
    def n_train(self) -> int:
        return len(self.train)

    def all_data(self) -> Dataset:
        return Dataset.concat([self.train, self.valid, self.test])


class SyntheticMetadata(BaseModel):
    """Class semantics of a generated industrial-like dataset."""

    num_classes: int
    feature_dim: int
    samples_per_class: int
    num_clients: int
    separation: float
    healthy_classes: list[int]
    anomalous_classes: list[int]
    class_names: dict[int, str]


class SplitRatios(BaseModel):
    """Fractions of each client's data going to train/valid/test."""

    model_config = ConfigDict(frozen=True)

    train: float = Field(default=0.7, gt=0.0, le=1.0)
    valid: float = Field(default=0.15, ge=0.0, le=1.0)
    test: float = Field(default=0.15, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _check_sum(self) -> "SplitRatios":
        if abs(self.train + self.valid + self.test - 1.0) > SUM_TOLERANCE:
            raise ValueError("split ratios must sum to 1")
        return self


class AffineTransform(BaseModel):
    """Per-client feature transform: optional 2-D rotation, then scale and offset."""

    model_config = ConfigDict(frozen=True)

    rotation_seed: Optional[int] = None
    scale: float = 1.0
    offset: float = 0.0

    @property
    def is_identity(self) -> bool:
        return self.rotation_seed is None and self.scale == 1.0 and self.offset == 0.0


class IidScheme(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["iid"] = "iid"


class LabelSkewScheme(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["label_skew"] = "label_skew"
    classes_per_client: int = Field(ge=1)


class QuantitySkewScheme(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["quantity_skew"] = "quantity_skew"
    proportions: list[float]

    @field_validator("proportions")
    @classmethod
    def _check_proportions(cls, value: list[float]) -> list[float]:
        if any(p <= 0 for p in value):
            raise ValueError("quantity proportions must be positive")
        if abs(sum(value) - 1.0) > SUM_TOLERANCE:
            raise ValueError("quantity proportions must sum to 1")
        return value


class FeatureSkewScheme(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["feature_skew"] = "feature_skew"
    transforms: list[AffineTransform]


class ExplicitScheme(BaseModel):
    """Assignment file `sampleIndex,clientId` plus optional label permutations."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["explicit"] = "explicit"
    assignment_path: Path
    label_permutations: dict[int, list[int]] = Field(default_factory=dict)


PartitionScheme = Annotated[
    Union[IidScheme, LabelSkewScheme, QuantitySkewScheme, FeatureSkewScheme, ExplicitScheme],
    Field(discriminator="kind"),
]


class PartitionSpec(BaseModel):
    """How a dataset is distributed over K clients."""

    model_config = ConfigDict(frozen=True)

    scheme: PartitionScheme = Field(default_factory=IidScheme)
    client_count: int = Field(ge=2)
    split_ratios: SplitRatios = Field(default_factory=SplitRatios)
    seed: int = 0

    @model_validator(mode="after")
    def _check_scheme(self) -> "PartitionSpec":
        scheme = self.scheme
        if isinstance(scheme, QuantitySkewScheme) and len(scheme.proportions) != self.client_count:
            raise ValueError(f"{len(scheme.proportions)} proportions for {self.client_count} clients")
        if isinstance(scheme, FeatureSkewScheme) and len(scheme.transforms) != self.client_count:
            raise ValueError(f"{len(scheme.transforms)} transforms for {self.client_count} clients")
        return self


class EmpiricalDistributions(BaseModel):
    """Histogram estimates of P_Y, P_X (per dimension) and P_{Y|X}."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    counts: np.ndarray = Field(description="joint counts, shape (dims, bins, classes)")
    bin_edges: np.ndarray = Field(description="shape (dims, bins + 1)")
    label_marginal: np.ndarray
    feature_marginal: np.ndarray
    conditional: np.ndarray = Field(description="P(y | x_j in bin); zero rows for empty bins")

    @property
    def sample_count(self) -> int:
        return int(self.counts[0].sum())

    def joint(self) -> np.ndarray:
        """Directly counted joint frequencies per dimension and bin."""
        return self.counts / self.sample_count

    def feature_given_label(self) -> np.ndarray:
        """P(x_j in bin | y); zero columns for absent classes."""
        per_class = self.counts.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(per_class > 0, self.counts / np.maximum(per_class, 1), 0.0)


class SkewThresholds(BaseModel):
    model_config = ConfigDict(frozen=True)

    label_tv: float = 0.2
    feature_tv: float = 0.2
    quantity_ratio: float = 2.0


class SkewReport(BaseModel):
    """Pairwise distances between clients and the resulting skew flags."""

    client_ids: list[int]
    sizes: dict[int, int]
    label_tv: list[list[float]]
    feature_tv: list[list[float]]
    max_label_tv: float
    max_feature_tv: float
    quantity_ratio: float
    label_skew: bool
    feature_skew: bool
    quantity_skew: bool


# ---------------------------------------------------------------------------
# Federation
# ---------------------------------------------------------------------------


class GlobalEta(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["global"] = "global"
    learning_rate: float = Field(ge=0.0)


class PerClientEta(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["per_client"] = "per_client"
    learning_rates: dict[int, float]


EtaSource = Annotated[Union[GlobalEta, PerClientEta], Field(discriminator="kind")]


class FederationConfig(BaseModel):
    """The (R, C, E, B, eta-source) tuple of a federated run."""

    model_config = ConfigDict(frozen=True)

    rounds: int = Field(ge=1)
    client_fraction: float = Field(gt=0.0, le=1.0)
    epochs: int = Field(ge=1)
    batch_size: int = Field(ge=1)
    eta_source: EtaSource
    seed: int = 0
    dropout: DropoutMode = DropoutMode.ENABLED

    def learning_rate_for(self, client_id: int) -> float:
        source = self.eta_source
        if isinstance(source, GlobalEta):
            return source.learning_rate
        if client_id not in source.learning_rates:
            raise ValueError(f"no learning rate configured for client {client_id}")
        return source.learning_rates[client_id]


class Cohort(BaseModel):
    """Clients allowed to exchange model knowledge."""

    model_config = ConfigDict(frozen=True)

    cohort_id: int = 0
    members: list[int]

    @field_validator("members")
    @classmethod
    def _check_members(cls, value: list[int]) -> list[int]:
        if not value:
            raise ValueError("cohort must have at least one member")
        if len(set(value)) != len(value):
            raise ValueError("cohort members must be unique")
        return value


class RoundLog(BaseModel):
    """Observability record of one communication round."""

    round: int
    participants: list[int]
    train_loss: dict[int, float] = Field(default_factory=dict)
    valid_accuracy: dict[int, float] = Field(default_factory=dict)
    diverged: list[int] = Field(default_factory=list)


class FederationResult(BaseModel):
    """Final parameters of a FedAvg run plus its communication accounting."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    params: np.ndarray
    logs: list[RoundLog]
    broadcasts: int = 0
    participant_updates: int = 0
    aggregation_rounds: int = 0


class BaselineRow(BaseModel):
    client_id: int
    individual: float
    central: float
    federated: float
    learning_rate: float


class BaselineReport(BaseModel):
    """Individual / central / federated accuracies on the pooled cohort test set."""

    cohort_id: int
    rows: list[BaselineRow]

    def mean(self, approach: Approach) -> float:
        return float(np.mean([getattr(row, approach.value) for row in self.rows]))


# ---------------------------------------------------------------------------
# Hyperparameter optimization
# ---------------------------------------------------------------------------


class Grid(BaseModel):
    """Candidate learning rates for grid search."""

    model_config = ConfigDict(frozen=True)

    values: list[float] = Field(default_factory=lambda: list(PAPER_GRID))

    @field_validator("values")
    @classmethod
    def _check_values(cls, value: list[float]) -> list[float]:
        if not value:
            raise ValueError("grid must not be empty")
        if any(v <= 0 for v in value):
            raise ValueError("grid values must be positive")
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError("grid values must be strictly ascending")
        return value


class KernelParams(BaseModel):
    """Squared-exponential kernel hyperparameters."""

    model_config = ConfigDict(frozen=True)

    signal_variance: float = Field(default=1.0, gt=0.0)
    lengthscale: float = Field(default=0.5, gt=0.0)
    noise_variance: float = Field(default=1e-4, ge=0.0)


class BOConfig(BaseModel):
    """Bayesian optimization over log10(eta)."""

    model_config = ConfigDict(frozen=True)

    eta_min: float = Field(default=1e-4, gt=0.0)
    eta_max: float = Field(default=1e-1, gt=0.0)
    n_init: int = Field(default=4, ge=1)
    n_iter: int = Field(default=8, ge=0)
    ucb_beta: float = Field(default=2.0, ge=0.0)
    kernel: KernelParams = Field(default_factory=KernelParams)
    seed: int = 0
    init_design: InitDesign = InitDesign.CENTERED
    acquisition_points: int = Field(default=1000, ge=2)

    @model_validator(mode="after")
    def _check_bounds(self) -> "BOConfig":
        if self.eta_min >= self.eta_max:
            raise ValueError("eta_min must be smaller than eta_max")
        return self

    @property
    def log_bounds(self) -> tuple[float, float]:
        return math.log10(self.eta_min), math.log10(self.eta_max)


class GPState(BaseModel):
    """Observed (log10 eta, accuracy) pairs plus kernel parameters."""

    model_config = ConfigDict(frozen=True)

    observations: list[tuple[float, float]] = Field(default_factory=list)
    kernel: KernelParams = Field(default_factory=KernelParams)

    @field_validator("observations")
    @classmethod
    def _check_values(cls, value: list[tuple[float, float]]) -> list[tuple[float, float]]:
        for _, accuracy in value:
            if not 0.0 <= accuracy <= 1.0:
                raise ValueError(f"observed value {accuracy} outside [0, 1]")
        return value

    def observe(self, u: float, value: float) -> "GPState":
        return GPState(observations=[*self.observations, (u, value)], kernel=self.kernel)


class TraceEntry(BaseModel):
    """One objective evaluation."""

    eta: float
    accuracy: float
    client_id: Optional[int] = None
    client_accuracies: dict[int, float] = Field(default_factory=dict)
    diverged: bool = False


class HpoOutcome(BaseModel):
    """Selected learning rate(s) of a regime plus the evaluation trace."""

    cohort_id: int = 0
    regime: Regime
    strategy: Strategy
    result: Union[float, dict[int, float]]
    trace: list[TraceEntry] = Field(default_factory=list)
    broadcasts: int = 0
    participant_updates: int = 0
    aggregation_rounds: int = 0

    @model_validator(mode="after")
    def _check_result(self) -> "HpoOutcome":
        if self.regime is Regime.GLOBAL and not isinstance(self.result, float):
            raise ValueError("global outcome must carry a single learning rate")
        if self.regime is Regime.LOCAL and not isinstance(self.result, dict):
            raise ValueError("local outcome must map clients to learning rates")
        return self

    @property
    def approach(self) -> Approach:
        return Approach.for_hpo(self.regime, self.strategy)

    def eta_source(self) -> EtaSource:
        """Learning-rate source for the posterior federated training."""
        if isinstance(self.result, dict):
            return PerClientEta(learning_rates=dict(self.result))
        return GlobalEta(learning_rate=self.result)

    def learning_rate_for(self, client_id: int) -> float:
        if isinstance(self.result, dict):
            return self.result[client_id]
        return self.result


# ---------------------------------------------------------------------------
# Analysis
# ---------------------------------------------------------------------------


class ResultRow(BaseModel):
    client_id: int
    cohort_id: int
    approach: Approach
    accuracy: float = Field(ge=0.0, le=1.0)
    learning_rate: Optional[float] = None


class ResultTable(BaseModel):
    """Per-client test accuracies of every approach."""

    rows: list[ResultRow] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_unique(self) -> "ResultTable":
        seen = set()
        for row in self.rows:
            key = (row.client_id, row.approach)
            if key in seen:
                raise ValueError(f"duplicate result for client {row.client_id} / {row.approach.value}")
            seen.add(key)
        return self

    def approaches(self) -> list[Approach]:
        return sorted({row.approach for row in self.rows}, key=lambda a: list(Approach).index(a))

    def accuracies(self, approach: Approach) -> dict[int, float]:
        return {row.client_id: row.accuracy for row in self.rows if row.approach is approach}

    def cohort_of(self) -> dict[int, int]:
        return {row.client_id: row.cohort_id for row in self.rows}

    def merged(self, other: "ResultTable") -> "ResultTable":
        return ResultTable(rows=[*self.rows, *other.rows])


class TTestResult(BaseModel):
    """Two-tailed paired t-test outcome."""

    approach_a: Optional[Approach] = None
    approach_b: Optional[Approach] = None
    t_statistic: Optional[float] = Field(description="None when the differences are constant and non-zero")
    degrees_of_freedom: int = Field(ge=1)
    p_value: float = Field(ge=0.0, le=1.0)
    mean_difference: float
    n_pairs: int
    excluded_clients: list[int] = Field(default_factory=list)
    degenerate: bool = False


class CohortSummary(BaseModel):
    cohort_id: int
    approach: Approach
    mean: float
    min: float
    max: float
    count: int


# ---------------------------------------------------------------------------
# Experiment configuration and artifacts
# ---------------------------------------------------------------------------


class SyntheticSource(BaseModel):
    kind: Literal["synthetic"] = "synthetic"
    num_classes: int = Field(default=6, ge=2)
    samples_per_class: int = Field(default=512, ge=1, description="per class and per client")
    feature_dim: int = Field(default=24, ge=1)
    separation: float = Field(default=0.75, gt=0.0)


class IdxSource(BaseModel):
    kind: Literal["idx"] = "idx"
    path: Path
    labels_path: Path
    num_classes: Optional[int] = None


class CsvSource(BaseModel):
    kind: Literal["csv"] = "csv"
    path: Path
    num_classes: Optional[int] = None


DatasetSource = Annotated[Union[SyntheticSource, IdxSource, CsvSource], Field(discriminator="kind")]


class ModelChoice(BaseModel):
    """Preset network name or an inline layer stack (inline layers win)."""

    model_config = ConfigDict(extra="forbid")

    preset: Optional[Literal["industrial", "mlp"]] = "mlp"
    hidden_units: int = Field(default=128, ge=1)
    dropout_rate: float = Field(default=0.4, ge=0.0, lt=1.0)
    layers: Optional[list[Layer]] = None

    @model_validator(mode="after")
    def _check_choice(self) -> "ModelChoice":
        if self.layers is None and self.preset is None:
            raise ValueError("model needs either a preset or inline layers")
        return self


class FederationSettings(BaseModel):
    """Federation block of an experiment config."""

    model_config = ConfigDict(extra="forbid")

    rounds: int = Field(default=10, ge=1)
    client_fraction: float = Field(default=1.0, gt=0.0, le=1.0)
    epochs: int = Field(default=1, ge=1)
    batch_size: int = Field(default=128, ge=1)
    learning_rate: float = Field(default=1e-3, ge=0.0, description="used by baseline runs")
    dropout: DropoutMode = DropoutMode.ENABLED
    workers: int = Field(default=1, ge=1)

    def to_config(self, eta_source: EtaSource, seed: int) -> FederationConfig:
        return FederationConfig(
            rounds=self.rounds,
            client_fraction=self.client_fraction,
            epochs=self.epochs,
            batch_size=self.batch_size,
            eta_source=eta_source,
            seed=seed,
            dropout=self.dropout,
        )


class HpoSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    regimes: list[Regime] = Field(default_factory=lambda: [Regime.GLOBAL, Regime.LOCAL])
    strategies: list[Strategy] = Field(default_factory=lambda: [Strategy.GRID])
    grid: Grid = Field(default_factory=Grid)
    bayes: BOConfig = Field(default_factory=BOConfig)
    local_epochs: Union[Literal["derived"], int] = "derived"
    posterior: Optional[FederationSettings] = None
    shared_w0: bool = Field(default=False, description="Start every global candidate from the cohort w0")

    def local_epoch_count(self, federation: FederationSettings) -> int:
        """E_local: explicit value or E_global * R."""
        if self.local_epochs == "derived":
            return federation.epochs * federation.rounds
        if self.local_epochs < 1:
            raise ValueError("local_epochs must be positive")
        return self.local_epochs


class AnalysisSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    pairs: list[tuple[Approach, Approach]] = Field(default_factory=list)
    exclude: list[int] = Field(default_factory=list)
    results: list[Path] = Field(default_factory=list)


class ExperimentConfig(BaseModel):
    """Complete description of an experiment."""

    model_config = ConfigDict(extra="forbid")

    name: str = "experiment"
    dataset: Optional[DatasetSource] = None
    partition: PartitionSpec = Field(default_factory=lambda: PartitionSpec(client_count=10))
    cohorts: dict[int, int] = Field(default_factory=dict, description="client id -> cohort id")
    model: ModelChoice = Field(default_factory=ModelChoice)
    federation: FederationSettings = Field(default_factory=FederationSettings)
    hpo: HpoSettings = Field(default_factory=HpoSettings)
    analysis: AnalysisSettings = Field(default_factory=AnalysisSettings)
    output_dir: Path = Path("output")
    seed: int = 0

    @model_validator(mode="after")
    def _check_cohorts(self) -> "ExperimentConfig":
        if self.cohorts and set(self.cohorts) != set(range(self.partition.client_count)):
            raise ValueError("cohort map must cover exactly the clients 0..K-1")
        return self

    def cohort_list(self) -> list[Cohort]:
        mapping = self.cohorts or {k: 0 for k in range(self.partition.client_count)}
        grouped: dict[int, list[int]] = {}
        for client_id in sorted(mapping):
            grouped.setdefault(mapping[client_id], []).append(client_id)
        return [Cohort(cohort_id=cohort_id, members=members) for cohort_id, members in sorted(grouped.items())]


class RoundRecord(BaseModel):
    cohort_id: int
    approach: Approach
    log: RoundLog


class Timing(BaseModel):
    started_at: str
    duration_seconds: float


class RunArtifact(BaseModel):
    """Everything a run produced, persisted as `artifact.json`."""

    kind: ArtifactKind
    config_text: str
    overrides: list[str] = Field(default_factory=list)
    config: ExperimentConfig
    outcomes: list[HpoOutcome] = Field(default_factory=list)
    baselines: list[BaselineReport] = Field(default_factory=list)
    results: ResultTable = Field(default_factory=ResultTable)
    rounds: list[RoundRecord] = Field(default_factory=list)
    timing: Optional[Timing] = None
