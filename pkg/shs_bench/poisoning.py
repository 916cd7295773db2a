"""
Training-Set Poisoning

Label flipping, sample injection and feature modification of a training
split, plus the rate sweep that retrains each algorithm on poisoned data and
measures the accuracy drop on the untouched test split. corrupt_parameters
is a hook for overwriting one learned parameter directly.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .datagen import SplitSpec, plausibility_bounds, split
from .dataset import Dataset
from .errors import ConfigurationError
from .metrics import evaluate
from .models import Classifier, TrainingConfig, train
from .schema import NUM_STATES, PatientState
from .workers import ResultTable, run_cells

logger = logging.getLogger(__name__)


class PoisonMode(Enum):
    LABEL_FLIP = "label_flip"
    INJECTION = "injection"
    MODIFICATION = "modification"


@dataclass(frozen=True)
class FlipRule:
    """UniformOtherClass when target is None, else TargetedToClass(target)."""

    target: Optional[PatientState] = None

    def __post_init__(self):
        if self.target is not None:
            if not 0 <= int(self.target) < NUM_STATES:
                raise ConfigurationError(f"Flip target must be a valid state, got {self.target}")
            object.__setattr__(self, "target", PatientState(int(self.target)))

    @classmethod
    def uniform(cls) -> "FlipRule":
        return cls()

    @classmethod
    def targeted(cls, target) -> "FlipRule":
        return cls(PatientState(int(target)))

    def __str__(self) -> str:
        return "uniform" if self.target is None else f"targeted({self.target.display_name})"


@dataclass(frozen=True)
class PoisonSpec:
    mode: PoisonMode = PoisonMode.LABEL_FLIP
    rate: float = 0.1
    seed: int = 0
    flip_rule: FlipRule = FlipRule()
    modification_threshold: float = 0.1

    def __post_init__(self):
        if not (np.isfinite(self.rate) and 0.0 <= self.rate <= 1.0):
            raise ConfigurationError(f"Poison rate must lie in [0, 1], got {self.rate}")
        if not (np.isfinite(self.modification_threshold) and self.modification_threshold >= 0.0):
            raise ConfigurationError(f"modification_threshold must be >= 0, got {self.modification_threshold}")
        object.__setattr__(self, "mode", PoisonMode(self.mode))

    def with_rate(self, rate: float, seed: Optional[int] = None) -> "PoisonSpec":
        return PoisonSpec(self.mode, rate, self.seed if seed is None else seed,
                          self.flip_rule, self.modification_threshold)


@dataclass(frozen=True)
class PoisonManifest:
    """
    Affected rows of the poisoned dataset.

    For Injection, indices are the appended rows and source_indices the
    training rows they were copied from; otherwise the two coincide.
    """

    indices: np.ndarray
    source_indices: np.ndarray
    original_labels: np.ndarray
    new_labels: np.ndarray

    def __len__(self) -> int:
        return int(self.indices.size)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "index": self.indices,
            "source_index": self.source_indices,
            "original_label": [PatientState(int(v)).display_name for v in self.original_labels],
            "new_label": [PatientState(int(v)).display_name for v in self.new_labels],
        })

    def export_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, lineterminator="\n")
        return path


def _flip_labels(y: np.ndarray, rule: FlipRule, rng: np.random.Generator) -> np.ndarray:
    if rule.target is not None:
        return np.full(y.shape, int(rule.target), dtype=np.int64)
    # uniform over the ten other classes
    return (y + rng.integers(1, NUM_STATES, size=y.shape)) % NUM_STATES


def _choose(candidates: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    if k > candidates.size:
        raise ConfigurationError(f"Cannot poison {k} samples, only {candidates.size} eligible")
    return np.sort(rng.choice(candidates, size=k, replace=False))


def poison(train_ds: Dataset, spec: PoisonSpec) -> Tuple[Dataset, PoisonManifest]:
    """Apply spec to train_ds; exactly floor(rate * n) samples are affected."""
    n = len(train_ds)
    k = int(np.floor(spec.rate * n))
    rng = np.random.default_rng(spec.seed)
    X = np.array(train_ds.X)
    y = np.array(train_ds.y)
    empty = np.empty(0, dtype=np.int64)

    if k == 0:
        return train_ds.with_data(X, y), PoisonManifest(empty, empty, empty, empty)

    if spec.mode is PoisonMode.LABEL_FLIP:
        eligible = np.arange(n)
        if spec.flip_rule.target is not None:
            eligible = np.flatnonzero(y != int(spec.flip_rule.target))
        chosen = _choose(eligible, k, rng)
        old = y[chosen].copy()
        y[chosen] = _flip_labels(old, spec.flip_rule, rng)
        manifest = PoisonManifest(chosen, chosen, old, y[chosen].copy())

    elif spec.mode is PoisonMode.INJECTION:
        eligible = np.arange(n)
        if spec.flip_rule.target is not None:
            eligible = np.flatnonzero(y != int(spec.flip_rule.target))
        sources = np.sort(rng.choice(eligible, size=k, replace=eligible.size < k))
        old = y[sources].copy()
        new = _flip_labels(old, spec.flip_rule, rng)
        X = np.vstack([X, X[sources]])
        y = np.concatenate([y, new])
        manifest = PoisonManifest(np.arange(n, n + k), sources, old, new)

    else:
        chosen = _choose(np.arange(n), k, rng)
        width = X.max(axis=0) - X.min(axis=0)
        noise = rng.uniform(-1.0, 1.0, size=(k, X.shape[1])) * (spec.modification_threshold * width)
        X[chosen] = np.clip(X[chosen] + noise, *plausibility_bounds(train_ds.schema))
        manifest = PoisonManifest(chosen, chosen, y[chosen].copy(), y[chosen].copy())

    logger.info("Poisoned %d of %d training samples (%s, rate %.2f)", k, n, spec.mode.value, spec.rate)
    return train_ds.with_data(X, y), manifest


def corrupt_parameters(classifier: Classifier, name: str, index: int, value: float) -> Classifier:
    """New classifier with one entry of parameter `name` (flat index) overwritten."""
    params = {key: np.array(arr) for key, arr in classifier.parameters().items()}
    if name not in params:
        raise ConfigurationError(f"Unknown parameter '{name}'. Available: {', '.join(sorted(params))}")
    target = params[name]
    if not 0 <= index < target.size:
        raise ConfigurationError(f"Index {index} out of range for '{name}' of size {target.size}")
    target.flat[index] = value
    return type(classifier).from_parameters(classifier.config, classifier.scaler, classifier.schema,
                                            params, classifier.train_accuracy)


def _poison_cell(config: TrainingConfig, ds: Dataset, split_seed: int,
                 spec: Optional[PoisonSpec]) -> float:
    train_ds, test_ds = split(ds, SplitSpec(seed=split_seed))
    before = test_ds.checksum()
    if spec is not None:
        train_ds, _ = poison(train_ds, spec)
    model = train(config, train_ds)
    if test_ds.checksum() != before:
        raise RuntimeError("Test split changed during poisoning")
    return evaluate(model, test_ds).accuracy


def poisoning_experiment(configs: Sequence[TrainingConfig], ds: Dataset, rates: Sequence[float],
                         seeds: Sequence[int], template: PoisonSpec = PoisonSpec(),
                         jobs: int = 1, progress: bool = False) -> ResultTable:
    """
    Median clean accuracy, poisoned accuracy and accuracy drop per (algorithm, rate).

    Each seed fixes the split, the poison draw and the training seed of one
    replicate; the drop of a replicate is clean minus poisoned accuracy and
    the table reports the median over seeds. Rate 0 is the clean baseline.
    """
    for rate in rates:
        if not 0.0 <= rate <= 1.0:
            raise ConfigurationError(f"Poison rate must lie in [0, 1], got {rate}")
    if not seeds:
        raise ConfigurationError("poisoning_experiment needs at least one seed")

    cells = []
    for config in configs:
        for seed in seeds:
            seeded = TrainingConfig(config.algorithm, int(seed), config.hyperparameters)
            cells.append(((config.algorithm.value, 0.0, seed), (seeded, ds, int(seed), None)))
            for rate in rates:
                if rate == 0:
                    continue
                spec = template.with_rate(rate, int(seed))
                cells.append(((config.algorithm.value, float(rate), seed), (seeded, ds, int(seed), spec)))

    outcomes = {o.key: o for o in run_cells(_poison_cell, cells, jobs, "poisoning cells", progress)}
    failures = [f"{key}: {o.error}" for key, o in outcomes.items() if not o.ok]

    rows = []
    for config in configs:
        algo = config.algorithm.value
        for rate in sorted({0.0, *(float(r) for r in rates)}):
            clean, poisoned, drops = [], [], []
            for seed in seeds:
                base = outcomes[(algo, 0.0, seed)]
                cell = outcomes[(algo, rate, seed)]
                if base.ok and cell.ok:
                    clean.append(base.value)
                    poisoned.append(cell.value)
                    drops.append(base.value - cell.value)
            rows.append({
                "algorithm": algo,
                "rate": rate,
                "clean_accuracy": float(np.median(clean)) if clean else float("nan"),
                "poisoned_accuracy": float(np.median(poisoned)) if poisoned else float("nan"),
                "accuracy_drop": float(np.median(drops)) if drops else float("nan"),
            })
    return ResultTable(pd.DataFrame(rows), failures)


def drop_grid(table: pd.DataFrame) -> pd.DataFrame:
    """Algorithms as rows, poisoned rates as columns, accuracy drops as values."""
    poisoned = table[table["rate"] > 0]
    grid = poisoned.pivot(index="algorithm", columns="rate", values="accuracy_drop")
    order = list(dict.fromkeys(table["algorithm"]))
    return grid.reindex(order)
