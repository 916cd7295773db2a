"""
Labeled cohorts and the min/max scaler.

Datasets keep physical units; models and attacks work in the scaler's
normalized [0, 1] space so that perturbation thresholds are fractions of a
feature's training range.
"""

import hashlib
from dataclasses import dataclass, field
from typing import Iterator, Optional, Tuple

import numpy as np
import pandas as pd

from .errors import ConfigurationError, DegenerateFeatureError, InvalidInputError
from .schema import NUM_STATES, FeatureSchema, PatientState


@dataclass(frozen=True)
class Provenance:
    """Where a dataset came from: Synthetic(seed) or Ingested(path)."""

    kind: str
    seed: Optional[int] = None
    path: Optional[str] = None

    @classmethod
    def synthetic(cls, seed: int) -> "Provenance":
        return cls(kind="synthetic", seed=int(seed))

    @classmethod
    def ingested(cls, path: str) -> "Provenance":
        return cls(kind="ingested", path=str(path))

    def __str__(self) -> str:
        if self.kind == "synthetic":
            return f"Synthetic(seed={self.seed})"
        return f"Ingested({self.path})"


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """Samples X (n x 15, physical units) with labels y (n,)."""

    schema: FeatureSchema
    X: np.ndarray
    y: np.ndarray
    provenance: Provenance

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y)
        if X.ndim != 2 or X.shape[1] != len(self.schema):
            raise InvalidInputError(f"Expected samples of width {len(self.schema)}, got shape {X.shape}")
        if X.shape[0] == 0:
            raise InvalidInputError("Dataset must contain at least one sample")
        if y.shape != (X.shape[0],):
            raise InvalidInputError(f"Label vector shape {y.shape} does not match {X.shape[0]} samples")
        if not np.all(np.isfinite(X)):
            row, col = np.argwhere(~np.isfinite(X))[0]
            raise InvalidInputError(f"Non-finite value at sample {row}, feature {col}")
        y = y.astype(np.int64)
        if y.min() < 0 or y.max() >= NUM_STATES:
            raise InvalidInputError(f"Labels must lie in 0..{NUM_STATES - 1}")
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "y", _frozen(y))

    def __len__(self) -> int:
        return self.X.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.schema == other.schema
            and self.X.shape == other.X.shape
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.y, other.y)
        )

    def samples(self) -> Iterator[Tuple[np.ndarray, PatientState]]:
        for row, label in zip(self.X, self.y):
            yield row, PatientState(int(label))

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.schema, self.X[indices], self.y[indices], self.provenance)

    def with_data(self, X: np.ndarray, y: np.ndarray) -> "Dataset":
        return Dataset(self.schema, X, y, self.provenance)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=NUM_STATES)

    def checksum(self) -> str:
        """SHA-256 over the raw sample and label bytes."""
        digest = hashlib.sha256()
        digest.update(np.ascontiguousarray(self.X).tobytes())
        digest.update(np.ascontiguousarray(self.y).tobytes())
        return digest.hexdigest()

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.X, columns=self.schema.feature_names)
        df["label"] = [PatientState(int(v)).display_name for v in self.y]
        return df


@dataclass(frozen=True, eq=False)
class Scaler:
    """Per-feature min/max normalization fitted on a training split."""

    lo: np.ndarray
    hi: np.ndarray
    _span: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ConfigurationError("Scaler bounds must be equal-length vectors")
        if np.any(hi < lo):
            raise ConfigurationError("Scaler requires hi >= lo for every feature")
        flat = np.flatnonzero(hi == lo)
        if flat.size:
            raise DegenerateFeatureError(flat.tolist())
        object.__setattr__(self, "lo", _frozen(lo))
        object.__setattr__(self, "hi", _frozen(hi))
        object.__setattr__(self, "_span", _frozen(hi - lo))

    @classmethod
    def identity(cls, n_features: int) -> "Scaler":
        """Scaler whose normalized space equals the physical space [0, 1]."""
        return cls(np.zeros(n_features), np.ones(n_features))

    @property
    def span(self) -> np.ndarray:
        return self._span

    def __eq__(self, other) -> bool:
        if not isinstance(other, Scaler):
            return NotImplemented
        return np.array_equal(self.lo, other.lo) and np.array_equal(self.hi, other.hi)

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.lo) / self._span

    def inverse(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=np.float64) * self._span + self.lo


def fit_scaler(train: Dataset) -> Scaler:
    """Fit per-feature lo/hi on the training split only."""
    if len(train) == 0:
        raise InvalidInputError("Cannot fit a scaler on an empty dataset")
    return Scaler(train.X.min(axis=0), train.X.max(axis=0))
