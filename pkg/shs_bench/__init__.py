"""
SHS Adversarial Benchmark - adversarial machine learning against a smart
healthcare system classifier.

The package simulates a networked set of medical sensors feeding a central
classifier that infers one of eleven patient states, then measures how far
evasion and poisoning attacks can push that classifier.

Key Features:
- Synthetic cohort generator over a 15-feature, 8-device schema
- Four victims built from scratch (decision tree, random forest,
  logistic regression, neural net) behind capability-gated access
- Five evasion attacks (FGM, Carlini-Wagner, HopSkipJump, ZOO,
  decision-tree crafting) under device masks, thresholds and query budgets
- Label-flip, injection and modification poisoning
- Experiment recipes writing CSV metrics, SVG plots and a manifest

Basic Usage:
    >>> from shs_bench import GeneratorSpec, generate, split, train, TrainingConfig, Algorithm
    >>> ds = generate(GeneratorSpec.default(per_class=200, seed=42))
    >>> train_ds, test_ds = split(ds)
    >>> model = train(TrainingConfig(Algorithm.RANDOM_FOREST, 42), train_ds)
    >>> print(f"Train accuracy {model.train_accuracy:.2f}%")

Attacking a victim:
    >>> from shs_bench import AttackGoal, AttackConstraints, Capability, ModelAccess, batch_attack, attack_metrics
    >>> access = ModelAccess(model, Capability.SCORE)
    >>> results = batch_attack(access, test_ds.X[:50], AttackGoal.untargeted(),
    >>>                        AttackConstraints(threshold=0.2), "zoo", true_labels=test_ds.y[:50])
    >>> print(attack_metrics(results).accuracy_drop)
"""

from .version import __version__
from .errors import (
    CapabilityError,
    ConfigurationError,
    DegenerateFeatureError,
    InvalidInputError,
    NumericalError,
    ParseError,
    ShsBenchError,
    TrainingError,
)
from .schema import FeatureSchema, PatientState, correlation_matrix, default_schema
from .dataset import Dataset, Provenance, Scaler, fit_scaler
from .datagen import GeneratorSpec, SplitSpec, export_csv, generate, ingest_csv, split
from .models import Algorithm, Capability, Classifier, ModelAccess, TrainingConfig, train
from .model_format import load_model, model_info, save_model
from .attack_core import AttackConstraints, AttackGoal, CraftResult
from .batch_attack import AttackKind, AttackParams, batch_attack, export_results_csv
from .metrics import Metrics, attack_metrics, evaluate
from .poisoning import FlipRule, PoisonMode, PoisonSpec, poison, poisoning_experiment
from .device_analysis import device_reduction_sweep, minimal_device_search, threshold_sweep
from .experiment import ExperimentConfig, run_experiment

__all__ = [
    "__version__",
    "ShsBenchError",
    "ConfigurationError",
    "ParseError",
    "InvalidInputError",
    "DegenerateFeatureError",
    "CapabilityError",
    "TrainingError",
    "NumericalError",
    "FeatureSchema",
    "PatientState",
    "default_schema",
    "correlation_matrix",
    "Dataset",
    "Provenance",
    "Scaler",
    "fit_scaler",
    "GeneratorSpec",
    "SplitSpec",
    "generate",
    "split",
    "ingest_csv",
    "export_csv",
    "Algorithm",
    "Capability",
    "Classifier",
    "ModelAccess",
    "TrainingConfig",
    "train",
    "save_model",
    "load_model",
    "model_info",
    "AttackGoal",
    "AttackConstraints",
    "CraftResult",
    "AttackKind",
    "AttackParams",
    "batch_attack",
    "export_results_csv",
    "Metrics",
    "evaluate",
    "attack_metrics",
    "FlipRule",
    "PoisonMode",
    "PoisonSpec",
    "poison",
    "poisoning_experiment",
    "minimal_device_search",
    "device_reduction_sweep",
    "threshold_sweep",
    "ExperimentConfig",
    "run_experiment",
]

# Package metadata
__license__ = "MIT"
__description__ = "Adversarial attack benchmark for a machine-learning smart healthcare system"
