"""
Clean and adversarial evaluation metrics.

Accuracies are percentages; the accuracy drop is clean minus adversarial in
percentage points. The targeted success rate excludes skipped samples from
its denominator (samples already predicted as the target).
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .attack_core import CraftResult
from .dataset import Dataset
from .models import Classifier
from .schema import NUM_STATES


@dataclass(frozen=True)
class EvaluationResult:
    accuracy: float
    confusion: np.ndarray
    n_samples: int


def confusion_matrix(y_true, y_pred) -> np.ndarray:
    """11x11 counts, rows = true class, columns = predicted class."""
    out = np.zeros((NUM_STATES, NUM_STATES), dtype=np.int64)
    np.add.at(out, (np.asarray(y_true, dtype=np.int64), np.asarray(y_pred, dtype=np.int64)), 1)
    return out


def evaluate(classifier: Classifier, test: Dataset) -> EvaluationResult:
    predicted = classifier.predict_batch(test.X)
    confusion = confusion_matrix(test.y, predicted)
    accuracy = float(np.trace(confusion) / len(test) * 100.0)
    return EvaluationResult(accuracy, confusion, len(test))


def accuracy_drop(clean: float, adversarial: float) -> float:
    return clean - adversarial


@dataclass(frozen=True)
class Metrics:
    clean_accuracy: float
    adversarial_accuracy: float
    accuracy_drop: float
    success_rate: float
    mean_queries: float
    mean_l2: float
    mean_linf: float
    confusion: np.ndarray
    evaluated: int
    skipped: int
    failed: int

    def as_row(self) -> dict:
        return {
            "clean": self.clean_accuracy,
            "adversarial": self.adversarial_accuracy,
            "drop": self.accuracy_drop,
            "success": self.success_rate,
            "mean_queries": self.mean_queries,
            "mean_l2": self.mean_l2,
            "mean_linf": self.mean_linf,
            "evaluated": self.evaluated,
            "skipped": self.skipped,
            "failed": self.failed,
        }


def _mean(values) -> float:
    return float(np.mean(values)) if len(values) else float("nan")


def attack_metrics(results: Sequence[CraftResult], clean_accuracy: Optional[float] = None) -> Metrics:
    """
    Aggregate one (attack, model, goal) cell.

    Adversarial accuracy compares adversarial labels with the true labels
    carried on the results; skipped and failed samples keep their original
    prediction. When clean_accuracy is not given it is recomputed from the
    original labels of the same results.
    """
    labelled = [r for r in results if r.true_label is not None]
    truth = [int(r.true_label) for r in labelled]
    adversarial = [int(r.adversarial_label) for r in labelled]
    confusion = confusion_matrix(truth, adversarial)
    if labelled:
        adv_acc = float(np.trace(confusion) / len(labelled) * 100.0)
        if clean_accuracy is None:
            clean_accuracy = float(np.mean([int(r.original_label) == int(r.true_label) for r in labelled]) * 100.0)
    else:
        adv_acc = float("nan")
        clean_accuracy = float("nan") if clean_accuracy is None else clean_accuracy

    attempted = [r for r in results if not r.skipped]
    ran = [r for r in attempted if r.error is None]
    success_rate = float(np.mean([r.success for r in attempted]) * 100.0) if attempted else 0.0

    return Metrics(
        clean_accuracy=float(clean_accuracy),
        adversarial_accuracy=adv_acc,
        accuracy_drop=accuracy_drop(float(clean_accuracy), adv_acc),
        success_rate=success_rate,
        mean_queries=_mean([r.queries_used for r in ran]),
        mean_l2=_mean([r.l2_norm for r in ran]),
        mean_linf=_mean([r.linf_norm for r in ran]),
        confusion=confusion,
        evaluated=len(labelled),
        skipped=len(results) - len(attempted),
        failed=len(attempted) - len(ran),
    )
