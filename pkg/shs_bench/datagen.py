"""
Synthetic SHS Cohort Generator and CSV Ingestion

Stands in for the public device databases: each state draws the features of
its correlated signal groups from an abnormal interval and every other
feature from the normal range, then adds Gaussian noise.

CSV layout (one sample per line, UTF-8):
    heart_rate,systolic_bp,...,motion_intensity,label
"""

import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple, Union

import numpy as np
import pandas as pd

from .dataset import Dataset, Provenance
from .errors import ConfigurationError, ParseError
from .schema import (
    NUM_STATES,
    CorrelationMatrix,
    FeatureSchema,
    PatientState,
    correlation_matrix,
    default_schema,
)

logger = logging.getLogger(__name__)

CSV_FLOAT_FORMAT = "%.9g"
COHORT_PER_CLASS = 1546
DEFAULT_NOISE_SIGMA = 0.05

# Clip window after noise, in multiples of the normal-range width
PLAUSIBILITY_MARGIN = 3.0


class RuleKind(Enum):
    NORMAL = "normal"
    ABNORMAL = "abnormal"


@dataclass(frozen=True)
class SamplingRule:
    """Uniform draw on [lo, hi] for one (state, feature) pair."""

    kind: RuleKind
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ConfigurationError(f"Sampling interval [{self.lo}, {self.hi}] is empty")


H = PatientState

# Abnormal intervals per (state, feature name) for every feature whose signal
# group is marked in the correlation matrix. Similar states overlap on
# purpose so that clean accuracy stays below 100%.
DEFAULT_ABNORMAL_TABLE: Dict[PatientState, Dict[str, Tuple[float, float]]] = {
    H.HIGH_BLOOD_PRESSURE: {
        "sweating_rate": (0.5, 0.8),
        "systolic_bp": (140.0, 190.0),
        "diastolic_bp": (90.0, 120.0),
        "blood_glucose": (125.0, 165.0),
        "oxygen_saturation": (91.0, 95.0),
        "sleep_stage_score": (2.5, 4.0),
        "hemoglobin": (16.5, 19.0),
        "blood_alcohol": (0.08, 0.2),
        "eeg_delta_power": (55.0, 80.0),
        "eeg_theta_power": (28.0, 40.0),
        "eeg_alpha_power": (6.0, 12.0),
        "eeg_beta_power": (18.0, 28.0),
    },
    H.HIGH_CHOLESTEROL: {
        "sweating_rate": (0.45, 0.7),
        "systolic_bp": (125.0, 150.0),
        "diastolic_bp": (82.0, 95.0),
        "blood_glucose": (140.0, 200.0),
        "oxygen_saturation": (91.0, 96.0),
        "hemoglobin": (16.0, 19.0),
        "eeg_delta_power": (50.0, 75.0),
        "eeg_theta_power": (25.0, 36.0),
        "eeg_alpha_power": (7.0, 14.0),
        "eeg_beta_power": (16.0, 26.0),
    },
    H.EXCESSIVE_SWEATING: {
        "heart_rate": (95.0, 115.0),
        "sweating_rate": (1.2, 1.7),
        "systolic_bp": (80.0, 98.0),
        "diastolic_bp": (50.0, 64.0),
        "blood_glucose": (55.0, 75.0),
        "oxygen_saturation": (92.0, 96.0),
        "hemoglobin": (10.0, 12.8),
        "eeg_delta_power": (10.0, 22.0),
        "eeg_theta_power": (5.0, 12.0),
        "eeg_alpha_power": (35.0, 50.0),
        "eeg_beta_power": (18.0, 28.0),
        "motion_intensity": (0.3, 0.7),
    },
    H.ABNORMAL_OXYGEN_LEVEL: {
        "heart_rate": (100.0, 125.0),
        "systolic_bp": (118.0, 135.0),
        "diastolic_bp": (78.0, 88.0),
        "blood_glucose": (125.0, 150.0),
        "breathing_rate": (22.0, 32.0),
        "oxygen_saturation": (80.0, 91.0),
        "sleep_stage_score": (3.0, 5.0),
        "eeg_delta_power": (65.0, 100.0),
        "eeg_theta_power": (32.0, 50.0),
        "eeg_alpha_power": (4.0, 9.0),
        "eeg_beta_power": (3.0, 7.0),
        "motion_intensity": (0.3, 0.5),
    },
    H.ABNORMAL_BLOOD_SUGAR: {
        "heart_rate": (92.0, 112.0),
        "sweating_rate": (0.6, 1.3),
        "systolic_bp": (122.0, 145.0),
        "diastolic_bp": (80.0, 92.0),
        "blood_glucose": (180.0, 300.0),
        "oxygen_saturation": (90.0, 95.0),
        "hemoglobin": (9.0, 12.5),
        "eeg_delta_power": (55.0, 90.0),
        "eeg_theta_power": (28.0, 45.0),
        "eeg_alpha_power": (6.0, 13.0),
        "eeg_beta_power": (10.0, 17.0),
    },
    H.SLEEPING: {
        "heart_rate": (45.0, 62.0),
        "systolic_bp": (82.0, 100.0),
        "diastolic_bp": (50.0, 65.0),
        "blood_glucose": (60.0, 82.0),
        "breathing_rate": (8.0, 13.0),
        "oxygen_saturation": (92.0, 96.0),
    },
    H.WALKING: {
        "heart_rate": (95.0, 120.0),
        "sweating_rate": (0.5, 1.0),
        "blood_glucose": (80.0, 105.0),
        "breathing_rate": (18.0, 25.0),
        "oxygen_saturation": (95.0, 99.0),
        "hemoglobin": (11.8, 13.2),
        "eeg_delta_power": (10.0, 22.0),
        "eeg_theta_power": (7.0, 14.0),
        "eeg_alpha_power": (38.0, 55.0),
        "eeg_beta_power": (17.0, 25.0),
        "motion_intensity": (0.55, 0.95),
    },
    H.STRESS: {
        "heart_rate": (105.0, 140.0),
        "sweating_rate": (0.6, 1.2),
        "systolic_bp": (130.0, 160.0),
        "diastolic_bp": (85.0, 100.0),
        "breathing_rate": (19.0, 26.0),
        "eeg_delta_power": (10.0, 20.0),
        "eeg_theta_power": (7.0, 12.0),
        "eeg_alpha_power": (4.0, 10.0),
        "eeg_beta_power": (28.0, 45.0),
    },
    H.EXERCISE: {
        "heart_rate": (125.0, 170.0),
        "sweating_rate": (0.9, 1.5),
        "systolic_bp": (135.0, 170.0),
        "diastolic_bp": (70.0, 86.0),
        "blood_glucose": (60.0, 78.0),
        "breathing_rate": (25.0, 40.0),
        "oxygen_saturation": (90.0, 95.0),
        "eeg_delta_power": (8.0, 16.0),
        "eeg_theta_power": (5.0, 11.0),
        "eeg_alpha_power": (38.0, 60.0),
        "eeg_beta_power": (24.0, 35.0),
        "motion_intensity": (0.9, 1.2),
    },
    H.HEART_ATTACK: {
        "heart_rate": (140.0, 190.0),
        "sweating_rate": (1.0, 1.6),
        "breathing_rate": (26.0, 40.0),
        "eeg_delta_power": (75.0, 120.0),
        "eeg_theta_power": (38.0, 60.0),
        "eeg_alpha_power": (2.0, 7.0),
        "eeg_beta_power": (2.0, 6.0),
    },
    H.STROKE: {
        "heart_rate": (40.0, 58.0),
        "systolic_bp": (160.0, 205.0),
        "diastolic_bp": (95.0, 130.0),
        "hemoglobin": (8.0, 11.0),
        "eeg_delta_power": (95.0, 150.0),
        "eeg_theta_power": (45.0, 70.0),
        "eeg_alpha_power": (2.0, 6.0),
        "eeg_beta_power": (1.0, 5.0),
        "motion_intensity": (0.3, 0.55),
    },
}


@dataclass(frozen=True)
class GeneratorSpec:
    """Sampling rules, noise level, per-class counts and seed."""

    rules: Mapping[Tuple[PatientState, int], SamplingRule]
    class_counts: Mapping[PatientState, int]
    noise_sigma: float = DEFAULT_NOISE_SIGMA
    seed: int = 42

    def __post_init__(self):
        if self.noise_sigma < 0 or not np.isfinite(self.noise_sigma):
            raise ConfigurationError(f"noise_sigma must be a finite value >= 0, got {self.noise_sigma}")
        for state in PatientState:
            count = self.class_counts.get(state, 0)
            if int(count) < 1:
                raise ConfigurationError(f"class_counts[{state.display_name}] must be >= 1, got {count}")

    @classmethod
    def default(cls, schema: Optional[FeatureSchema] = None, per_class: int = COHORT_PER_CLASS,
                noise_sigma: float = DEFAULT_NOISE_SIGMA, seed: int = 42,
                abnormal_table: Optional[Mapping[PatientState, Mapping[str, Tuple[float, float]]]] = None,
                ) -> "GeneratorSpec":
        """Balanced cohort using the shipped abnormal-interval table."""
        schema = schema or default_schema()
        table = abnormal_table if abnormal_table is not None else DEFAULT_ABNORMAL_TABLE
        index_of = {f.name: f.id for f in schema.features}

        rules: Dict[Tuple[PatientState, int], SamplingRule] = {}
        for state in PatientState:
            abnormal = table.get(state, {})
            unknown = set(abnormal) - set(index_of)
            if unknown:
                raise ConfigurationError(f"Abnormal table for {state.display_name} names unknown features {sorted(unknown)}")
            for feature in schema.features:
                if feature.name in abnormal:
                    lo, hi = abnormal[feature.name]
                    rules[(state, feature.id)] = SamplingRule(RuleKind.ABNORMAL, float(lo), float(hi))
                else:
                    rules[(state, feature.id)] = SamplingRule(RuleKind.NORMAL, feature.normal_lo, feature.normal_hi)

        counts = {state: int(per_class) for state in PatientState}
        return cls(rules=rules, class_counts=counts, noise_sigma=float(noise_sigma), seed=int(seed))

    @property
    def total(self) -> int:
        return int(sum(self.class_counts[s] for s in PatientState))

    def validate(self, schema: FeatureSchema, corr: CorrelationMatrix):
        """Check one rule per pair, abnormal exactly where the matrix marks the feature."""
        problems = []
        for state in PatientState:
            marked = corr.abnormal_features(state)
            for feature in schema.features:
                rule = self.rules.get((state, feature.id))
                if rule is None:
                    problems.append(f"{state.display_name}/{feature.name}: no rule")
                    continue
                expected = RuleKind.ABNORMAL if feature.id in marked else RuleKind.NORMAL
                if rule.kind is not expected:
                    problems.append(
                        f"{state.display_name}/{feature.name}: rule is {rule.kind.value}, "
                        f"correlation matrix requires {expected.value}"
                    )
                if rule.kind is RuleKind.NORMAL and (rule.lo, rule.hi) != feature.normal_range:
                    problems.append(f"{state.display_name}/{feature.name}: normal rule differs from schema range")
        extra = len(self.rules) - len(PatientState) * len(schema)
        if extra > 0:
            problems.append(f"{extra} rules reference unknown (state, feature) pairs")
        if problems:
            raise ConfigurationError("Generator rules do not match the correlation matrix:\n  " + "\n  ".join(problems))


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.70
    seed: int = 42
    stratified: bool = True

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigurationError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")


def plausibility_bounds(schema: FeatureSchema) -> Tuple[np.ndarray, np.ndarray]:
    """Post-noise clip window [lo - 3*range, hi + 3*range], floored at zero."""
    lo, hi = schema.normal_bounds()
    width = hi - lo
    lower = np.maximum(lo - PLAUSIBILITY_MARGIN * width, 0.0)
    upper = hi + PLAUSIBILITY_MARGIN * width
    return lower, upper


def generate(spec: GeneratorSpec, schema: Optional[FeatureSchema] = None,
             corr: Optional[CorrelationMatrix] = None) -> Dataset:
    """
    Draw a labeled cohort.

    States are generated in class order with one RNG stream seeded from
    spec.seed, then shuffled with the same stream.
    """
    schema = schema or default_schema()
    corr = corr or correlation_matrix()
    spec.validate(schema, corr)

    rng = np.random.default_rng(spec.seed)
    width = np.array([f.span for f in schema.features])
    clip_lo, clip_hi = plausibility_bounds(schema)

    blocks = []
    labels = []
    for state in PatientState:
        n = int(spec.class_counts[state])
        lo = np.array([spec.rules[(state, f.id)].lo for f in schema.features])
        hi = np.array([spec.rules[(state, f.id)].hi for f in schema.features])
        block = rng.uniform(lo, hi, size=(n, len(schema)))
        if spec.noise_sigma > 0:
            block = block + rng.normal(0.0, 1.0, size=block.shape) * (spec.noise_sigma * width)
        block = np.clip(block, clip_lo, clip_hi)
        blocks.append(block)
        labels.append(np.full(n, int(state), dtype=np.int64))

    X = np.vstack(blocks)
    y = np.concatenate(labels)
    order = rng.permutation(X.shape[0])
    logger.info("Generated %d samples (seed=%d, noise=%.3f)", X.shape[0], spec.seed, spec.noise_sigma)
    return Dataset(schema, X[order], y[order], Provenance.synthetic(spec.seed))


def split(ds: Dataset, spec: SplitSpec = SplitSpec()) -> Tuple[Dataset, Dataset]:
    """Deterministic, disjoint train/test partition (stratified per class when requested)."""
    n = len(ds)
    if n < 2:
        raise ConfigurationError(f"Need at least 2 samples to split, got {n}")
    rng = np.random.default_rng(spec.seed)

    if spec.stratified:
        train_idx = []
        for label in range(NUM_STATES):
            members = np.flatnonzero(ds.y == label)
            if members.size == 0:
                continue
            if members.size < 2:
                raise ConfigurationError(
                    f"Class {PatientState(label).display_name} has {members.size} sample; "
                    "stratified split needs at least 2 per class"
                )
            members = rng.permutation(members)
            n_train = int(round(spec.train_fraction * members.size))
            n_train = min(max(n_train, 1), members.size - 1)
            train_idx.append(members[:n_train])
        train_idx = np.concatenate(train_idx)
    else:
        n_train = int(round(spec.train_fraction * n))
        n_train = min(max(n_train, 1), n - 1)
        train_idx = rng.permutation(n)[:n_train]

    train_idx = np.sort(train_idx)
    test_mask = np.ones(n, dtype=bool)
    test_mask[train_idx] = False
    return ds.subset(train_idx), ds.subset(np.flatnonzero(test_mask))


def export_csv(ds: Dataset, path: Union[str, Path]) -> Path:
    """
    Write the dataset in the ingestion format with 9 significant digits.

    Ingesting the file reproduces each value to that precision, a relative
    error of about 5e-9 at most. A second export of the ingested data is
    byte-identical.
    """
    path = Path(path)
    ds.to_frame().to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n", encoding="utf-8")
    return path


def _read_frame(path: Path) -> pd.DataFrame:
    encodings = ["utf-8", "latin-1"]
    for encoding in encodings:
        try:
            return pd.read_csv(path, dtype=str, keep_default_na=False, encoding=encoding)
        except UnicodeDecodeError:
            if encoding == encodings[-1]:
                raise
            logger.debug("Retrying %s with encoding %s", path.name, encodings[-1])
        except pd.errors.EmptyDataError:
            raise ParseError("File is empty", path=str(path))
    raise ParseError("Unreadable file", path=str(path))


def ingest_csv(path: Union[str, Path], schema: Optional[FeatureSchema] = None) -> Dataset:
    """
    Parse a CSV dataset whose header is the schema feature names plus 'label'.
    Values come back exactly as written, so an exported dataset matches its
    source to 9 significant digits.

    Raises ParseError naming the file line and column of the first problem.
    """
    schema = schema or default_schema()
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Dataset file not found: {path}")

    df = _read_frame(path)
    df.columns = [str(c).strip() for c in df.columns]
    expected = schema.feature_names + ["label"]

    missing = [c for c in expected if c not in df.columns]
    extra = [c for c in df.columns if c not in expected]
    if missing or extra:
        detail = []
        if missing:
            detail.append(f"missing columns {missing}")
        if extra:
            detail.append(f"unexpected columns {extra}")
        raise ParseError(
            f"Header does not match the {len(schema)}-feature schema: " + "; ".join(detail),
            path=str(path), line=1,
        )
    if df.empty:
        raise ParseError("No samples after the header", path=str(path), line=2)

    X = np.empty((len(df), len(schema)), dtype=np.float64)
    for j, name in enumerate(schema.feature_names):
        values = pd.to_numeric(df[name].str.strip(), errors="coerce").to_numpy(dtype=np.float64)
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            row = int(bad[0])
            raise ParseError(
                f"non-finite or non-numeric value '{df[name].iloc[row]}'",
                path=str(path), line=row + 2, column=name,
            )
        X[:, j] = values

    y = np.empty(len(df), dtype=np.int64)
    for row, text in enumerate(df["label"]):
        try:
            y[row] = int(PatientState.parse(text))
        except ParseError:
            raise ParseError(f"unknown label '{text}'", path=str(path), line=row + 2, column="label") from None

    logger.info("Ingested %d samples from %s", len(df), path)
    return Dataset(schema, X, y, Provenance.ingested(str(path)))
