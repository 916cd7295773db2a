"""
Victim Classifier Contract and Adversary Access Levels

Every classifier is trained and evaluated in scaler-normalized space. The
physical-unit API (predict, class_scores, ...) validates and scales a
VitalVector before delegating to the normalized batch methods that attacks
use through ModelAccess.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, field
from enum import Enum, IntEnum
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from .dataset import Dataset, Scaler, fit_scaler
from .errors import CapabilityError, ConfigurationError, InvalidInputError
from .schema import NUM_STATES, FeatureSchema, PatientState, validate_vector

logger = logging.getLogger(__name__)


class Algorithm(Enum):
    DECISION_TREE = "dt"
    RANDOM_FOREST = "rf"
    LOGISTIC_REGRESSION = "lr"
    NEURAL_NET = "nn"

    @classmethod
    def parse(cls, text: str) -> "Algorithm":
        key = str(text).strip().lower()
        aliases = {"ann": "nn", "mlp": "nn", "tree": "dt", "forest": "rf", "logreg": "lr"}
        key = aliases.get(key, key)
        for algo in cls:
            if key in (algo.value, algo.name.lower()):
                return algo
        raise ConfigurationError(f"Unknown algorithm '{text}' (choose from {[a.value for a in cls]})")


def _require_positive(record, *names):
    for name in names:
        value = getattr(record, name)
        if value is not None and not value > 0:
            raise ConfigurationError(f"{type(record).__name__}.{name} must be positive, got {value}")


@dataclass(frozen=True)
class TreeParams:
    max_depth: Optional[int] = 12
    min_leaf: int = 5

    def __post_init__(self):
        _require_positive(self, "max_depth", "min_leaf")


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 50
    max_features: int = 4
    max_depth: Optional[int] = 12
    min_leaf: int = 1
    bootstrap: bool = True

    def __post_init__(self):
        _require_positive(self, "n_trees", "max_features", "max_depth", "min_leaf")


@dataclass(frozen=True)
class LogisticParams:
    learning_rate: float = 0.5
    epochs: int = 1000
    l2: float = 1e-4

    def __post_init__(self):
        _require_positive(self, "learning_rate", "epochs")
        if self.l2 < 0:
            raise ConfigurationError(f"LogisticParams.l2 must be >= 0, got {self.l2}")


@dataclass(frozen=True)
class NeuralNetParams:
    layer_sizes: Tuple[int, ...] = (32,)
    activation: str = "relu"
    learning_rate: float = 0.01
    epochs: int = 200
    batch_size: int = 32

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        if any(s < 1 for s in self.layer_sizes):
            raise ConfigurationError(f"NeuralNetParams.layer_sizes must be positive, got {self.layer_sizes}")
        if self.activation not in ("relu", "tanh"):
            raise ConfigurationError(f"Unsupported activation '{self.activation}' (relu or tanh)")
        _require_positive(self, "learning_rate", "epochs", "batch_size")


Hyperparameters = Union[TreeParams, ForestParams, LogisticParams, NeuralNetParams]

DEFAULT_HYPERPARAMETERS = {
    Algorithm.DECISION_TREE: TreeParams,
    Algorithm.RANDOM_FOREST: ForestParams,
    Algorithm.LOGISTIC_REGRESSION: LogisticParams,
    Algorithm.NEURAL_NET: NeuralNetParams,
}


@dataclass(frozen=True)
class TrainingConfig:
    """Algorithm, training seed and the matching hyperparameter record."""

    algorithm: Algorithm
    seed: int = 42
    hyperparameters: Optional[Hyperparameters] = None

    def __post_init__(self):
        expected = DEFAULT_HYPERPARAMETERS[self.algorithm]
        if self.hyperparameters is None:
            object.__setattr__(self, "hyperparameters", expected())
        elif not isinstance(self.hyperparameters, expected):
            raise ConfigurationError(
                f"{self.algorithm.value} expects {expected.__name__}, got {type(self.hyperparameters).__name__}"
            )

    @classmethod
    def from_dict(cls, algorithm: Union[str, Algorithm], seed: int = 42,
                  hyperparameters: Optional[Dict[str, Any]] = None) -> "TrainingConfig":
        algo = algorithm if isinstance(algorithm, Algorithm) else Algorithm.parse(algorithm)
        record_type = DEFAULT_HYPERPARAMETERS[algo]
        try:
            record = record_type(**(hyperparameters or {}))
        except TypeError as e:
            raise ConfigurationError(f"Bad hyperparameters for {algo.value}: {e}") from None
        return cls(algorithm=algo, seed=int(seed), hyperparameters=record)

    def describe(self) -> Dict[str, Any]:
        return {"algorithm": self.algorithm.value, "seed": self.seed, **asdict(self.hyperparameters)}


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


class Classifier(ABC):
    """
    Trained victim model.

    Subclasses implement the normalized batch methods; argmax ties resolve
    to the lowest class index (numpy argmax semantics).
    """

    algorithm: Algorithm

    def __init__(self, config: TrainingConfig, scaler: Scaler, schema: FeatureSchema,
                 train_accuracy: float = float("nan")):
        self.config = config
        self.scaler = scaler
        self.schema = schema
        self.train_accuracy = float(train_accuracy)

    # -- normalized space -------------------------------------------------

    @abstractmethod
    def scores_normalized(self, Z: np.ndarray) -> np.ndarray:
        """Class scores (n x 11), rows summing to 1."""

    def labels_normalized(self, Z: np.ndarray) -> np.ndarray:
        return np.argmax(self.scores_normalized(Z), axis=1)

    def logits_normalized(self, Z: np.ndarray) -> np.ndarray:
        raise CapabilityError(f"{self.algorithm.value} has no logits")

    def loss_gradient_normalized(self, Z: np.ndarray, y: np.ndarray) -> np.ndarray:
        raise CapabilityError(f"{self.algorithm.value} has no input gradient")

    def logit_jacobian_normalized(self, z: np.ndarray) -> np.ndarray:
        raise CapabilityError(f"{self.algorithm.value} has no input gradient")

    def tree_structure(self):
        raise CapabilityError(f"{self.algorithm.value} does not export a tree structure")

    @property
    def supports_gradient(self) -> bool:
        return False

    @abstractmethod
    def parameters(self) -> Dict[str, np.ndarray]:
        """Learned parameters theta as named arrays (serialization order is sorted by name)."""

    @classmethod
    @abstractmethod
    def from_parameters(cls, config: TrainingConfig, scaler: Scaler, schema: FeatureSchema,
                        params: Dict[str, np.ndarray], train_accuracy: float) -> "Classifier":
        """Rebuild a classifier from parameters()."""

    # -- physical units -----------------------------------------------------

    def normalize(self, x) -> np.ndarray:
        return self.scaler.transform(validate_vector(x, self.schema))

    def normalize_batch(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(self.schema):
            raise InvalidInputError(f"Expected an (n, {len(self.schema)}) batch, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise InvalidInputError("Batch contains non-finite values")
        return self.scaler.transform(X)

    def predict(self, x) -> PatientState:
        return PatientState(int(self.labels_normalized(self.normalize(x)[None, :])[0]))

    def predict_batch(self, X) -> np.ndarray:
        return self.labels_normalized(self.normalize_batch(X))

    def class_scores(self, x) -> np.ndarray:
        return self.scores_normalized(self.normalize(x)[None, :])[0]

    def logits(self, x) -> np.ndarray:
        return self.logits_normalized(self.normalize(x)[None, :])[0]

    def input_gradient(self, x, y: PatientState) -> np.ndarray:
        """Gradient of cross-entropy at (x, y) w.r.t. the normalized input coordinates."""
        z = self.normalize(x)
        return self.loss_gradient_normalized(z[None, :], np.array([int(y)]))[0]


def classifier_type(algorithm: Algorithm):
    """Concrete Classifier subclass for an algorithm."""
    from .gradient_classifiers import LogisticRegression, NeuralNet
    from .tree_classifiers import DecisionTree, RandomForest

    return {
        Algorithm.DECISION_TREE: DecisionTree,
        Algorithm.RANDOM_FOREST: RandomForest,
        Algorithm.LOGISTIC_REGRESSION: LogisticRegression,
        Algorithm.NEURAL_NET: NeuralNet,
    }[algorithm]


def train(config: TrainingConfig, train_ds: Dataset, scaler: Optional[Scaler] = None) -> Classifier:
    """
    Fit a classifier on the training split.

    The scaler is fitted on train_ds unless one is passed in.
    """
    scaler = scaler if scaler is not None else fit_scaler(train_ds)
    Z = scaler.transform(train_ds.X)
    model = classifier_type(config.algorithm).fit(config, Z, train_ds.y, scaler, train_ds.schema)
    logger.info("Trained %s (seed=%d): train accuracy %.2f%%",
                config.algorithm.value, config.seed, model.train_accuracy)
    return model


def accuracy_percent(model: Classifier, Z: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(model.labels_normalized(Z) == y) * 100.0)


class Capability(IntEnum):
    """What an adversary may ask the victim."""

    LABEL = 0
    SCORE = 1
    GRADIENT = 2
    STRUCTURE = 3


_ALLOWED = {
    Capability.LABEL: {"labels"},
    Capability.SCORE: {"labels", "scores"},
    Capability.GRADIENT: {"labels", "scores", "gradient"},
    Capability.STRUCTURE: {"labels", "scores", "structure"},
}


@dataclass
class ModelAccess:
    """
    A classifier behind an adversary capability, with a per-session query counter.

    Every row sent to labels/scores/logits/gradient counts one query.
    """

    classifier: Classifier
    capability: Capability
    queries: int = field(default=0, init=False)

    def __post_init__(self):
        self.capability = Capability(self.capability)
        if self.capability is Capability.GRADIENT and not self.classifier.supports_gradient:
            raise CapabilityError(f"Gradient access is not available for {self.classifier.algorithm.value}")
        if self.capability is Capability.STRUCTURE and self.classifier.algorithm is not Algorithm.DECISION_TREE:
            raise CapabilityError("Structure access requires a decision tree victim")

    @property
    def scaler(self) -> Scaler:
        return self.classifier.scaler

    @property
    def schema(self) -> FeatureSchema:
        return self.classifier.schema

    def session(self) -> "ModelAccess":
        """Same victim and capability with a fresh counter."""
        return ModelAccess(self.classifier, self.capability)

    def allows(self, operation: str) -> bool:
        return operation in _ALLOWED[self.capability]

    def _check(self, operation: str):
        if not self.allows(operation):
            raise CapabilityError(f"'{operation}' is not permitted with {self.capability.name} access")

    @staticmethod
    def _batch(Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=np.float64)
        return Z[None, :] if Z.ndim == 1 else Z

    def labels(self, Z) -> np.ndarray:
        Z = self._batch(Z)
        self._check("labels")
        self.queries += Z.shape[0]
        return self.classifier.labels_normalized(Z)

    def scores(self, Z) -> np.ndarray:
        Z = self._batch(Z)
        self._check("scores")
        self.queries += Z.shape[0]
        return self.classifier.scores_normalized(Z)

    def logits(self, Z) -> np.ndarray:
        Z = self._batch(Z)
        self._check("gradient")
        self.queries += Z.shape[0]
        return self.classifier.logits_normalized(Z)

    def loss_gradient(self, Z, y) -> np.ndarray:
        Z = self._batch(Z)
        self._check("gradient")
        self.queries += Z.shape[0]
        return self.classifier.loss_gradient_normalized(Z, np.atleast_1d(np.asarray(y, dtype=np.int64)))

    def logit_jacobian(self, z) -> np.ndarray:
        """11 x 15 Jacobian of the logits at one normalized point."""
        self._check("gradient")
        self.queries += 1
        return self.classifier.logit_jacobian_normalized(np.asarray(z, dtype=np.float64))

    def tree_structure(self):
        self._check("structure")
        return self.classifier.tree_structure()


def default_capability(classifier: Classifier) -> Capability:
    """Widest access a classifier supports."""
    if classifier.algorithm is Algorithm.DECISION_TREE:
        return Capability.STRUCTURE
    if classifier.supports_gradient:
        return Capability.GRADIENT
    return Capability.SCORE


def check_labels(y: np.ndarray):
    y = np.asarray(y)
    if y.size and (y.min() < 0 or y.max() >= NUM_STATES):
        raise InvalidInputError(f"Labels must lie in 0..{NUM_STATES - 1}")
