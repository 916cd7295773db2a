"""
Shared attack plumbing: goals, constraints, projection and result records.

All attacks work in scaler-normalized space on an input first clipped into
the [0, 1] box; that clipped vector is the recorded original. Constraints
are enforced by one projection (feature mask, then L-inf threshold, then
box) so masked-out coordinates stay bit-identical.
"""

import logging
from dataclasses import dataclass, field
from typing import FrozenSet, Iterable, Optional, Tuple

import numpy as np

from .errors import ConfigurationError, InvalidInputError
from .models import ModelAccess
from .schema import FeatureSchema, PatientState, validate_vector

logger = logging.getLogger(__name__)

# A feature counts as touched when it moved by more than this (normalized units)
TOUCH_TOLERANCE = 1e-9
DEFAULT_QUERY_BUDGET = 20000


@dataclass(frozen=True)
class AttackGoal:
    """Untargeted (target is None) or targeted at one PatientState."""

    target: Optional[PatientState] = None

    def __post_init__(self):
        if self.target is not None:
            object.__setattr__(self, "target", PatientState(int(self.target)))

    @classmethod
    def untargeted(cls) -> "AttackGoal":
        return cls()

    @classmethod
    def targeted(cls, target) -> "AttackGoal":
        return cls(PatientState(int(target)))

    @property
    def is_targeted(self) -> bool:
        return self.target is not None

    def reached(self, label: int, original_label: int) -> bool:
        if self.target is None:
            return int(label) != int(original_label)
        return int(label) == int(self.target)

    def __str__(self) -> str:
        return "untargeted" if self.target is None else f"targeted({self.target.display_name})"


@dataclass(frozen=True)
class AttackConstraints:
    """
    threshold: per-feature L-inf budget in normalized units (None = unbounded).
    feature_mask: perturbable feature indices (None = every feature).
    query_budget: model-query cap for the decision and zeroth-order attacks.
    """

    threshold: Optional[float] = None
    feature_mask: Optional[FrozenSet[int]] = None
    query_budget: int = DEFAULT_QUERY_BUDGET

    def __post_init__(self):
        if self.threshold is not None:
            if not (np.isfinite(self.threshold) and 0.0 <= self.threshold <= 1.0):
                raise ConfigurationError(f"threshold must lie in [0, 1], got {self.threshold}")
            object.__setattr__(self, "threshold", float(self.threshold))
        if self.feature_mask is not None:
            object.__setattr__(self, "feature_mask", frozenset(int(i) for i in self.feature_mask))
        if self.query_budget < 1:
            raise ConfigurationError(f"query_budget must be >= 1, got {self.query_budget}")

    @classmethod
    def from_devices(cls, schema: FeatureSchema, device_ids: Iterable[int],
                     threshold: Optional[float] = None,
                     query_budget: int = DEFAULT_QUERY_BUDGET) -> "AttackConstraints":
        """Mask admitting exactly the features of the allowed devices."""
        return cls(threshold, schema.features_of(device_ids), query_budget)

    @classmethod
    def excluding_devices(cls, schema: FeatureSchema, removed: Iterable[int],
                          threshold: Optional[float] = None,
                          query_budget: int = DEFAULT_QUERY_BUDGET) -> "AttackConstraints":
        removed = set(removed)
        allowed = [d.id for d in schema.devices if d.id not in removed]
        return cls.from_devices(schema, allowed, threshold, query_budget)

    def mask_array(self, n_features: int) -> np.ndarray:
        if self.feature_mask is None:
            return np.ones(n_features, dtype=bool)
        mask = np.zeros(n_features, dtype=bool)
        mask[sorted(i for i in self.feature_mask if 0 <= i < n_features)] = True
        return mask

    def with_threshold(self, threshold: Optional[float]) -> "AttackConstraints":
        return AttackConstraints(threshold, self.feature_mask, self.query_budget)

    def with_mask(self, feature_mask: Optional[FrozenSet[int]]) -> "AttackConstraints":
        return AttackConstraints(self.threshold, feature_mask, self.query_budget)


def project(z: np.ndarray, origin: np.ndarray, constraints: AttackConstraints,
            mask: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Nearest feasible point: masked-out coordinates reset to origin, the rest
    clipped to the threshold ball and the [0, 1] box.

    origin must already lie inside the box.
    """
    z = np.asarray(z, dtype=np.float64)
    if mask is None:
        mask = constraints.mask_array(origin.shape[-1])
    out = np.where(mask, z, origin)
    if constraints.threshold is not None:
        t = constraints.threshold
        out = np.clip(out, origin - t, origin + t)
    out = np.clip(out, 0.0, 1.0)
    out = np.where(mask, out, origin)
    if constraints.threshold is not None:
        out = _pull_inside(out, origin, constraints.threshold)
    return out


def _pull_inside(z: np.ndarray, origin: np.ndarray, t: float) -> np.ndarray:
    # origin +/- t can round one ulp outside the ball
    over = np.abs(z - origin) > t
    while np.any(over):
        z = np.where(over, np.nextafter(z, origin), z)
        over = np.abs(z - origin) > t
    return z


class BudgetExhausted(Exception):
    """Raised by BudgetedOracle when a query would exceed the budget."""


class BudgetedOracle:
    """ModelAccess wrapper that refuses queries past the budget."""

    def __init__(self, access: ModelAccess, budget: int):
        self.access = access
        self.budget = int(budget)

    @property
    def used(self) -> int:
        return self.access.queries

    @property
    def remaining(self) -> int:
        return max(self.budget - self.access.queries, 0)

    def _reserve(self, n: int):
        if n > self.remaining:
            raise BudgetExhausted(f"{n} queries requested, {self.remaining} left of {self.budget}")

    def labels(self, Z) -> np.ndarray:
        Z = np.atleast_2d(Z)
        self._reserve(Z.shape[0])
        return self.access.labels(Z)

    def scores(self, Z) -> np.ndarray:
        Z = np.atleast_2d(Z)
        self._reserve(Z.shape[0])
        return self.access.scores(Z)

    def label(self, z) -> int:
        return int(self.labels(z)[0])


@dataclass(frozen=True, eq=False)
class CraftResult:
    """
    Outcome of one crafting attempt.

    original/adversarial are normalized vectors; norms are measured in the
    same space. skipped marks targeted samples already at the target and
    error carries the message of a failed attempt.
    """

    original: np.ndarray
    adversarial: np.ndarray
    original_label: PatientState
    adversarial_label: PatientState
    success: bool
    queries_used: int
    linf_norm: float
    l2_norm: float
    devices_touched: FrozenSet[int]
    attack: str = ""
    target: Optional[PatientState] = None
    true_label: Optional[PatientState] = None
    skipped: bool = False
    error: Optional[str] = None
    extra: dict = field(default_factory=dict)

    @property
    def changed_features(self) -> np.ndarray:
        return np.flatnonzero(np.abs(self.adversarial - self.original) > TOUCH_TOLERANCE)

    def physical(self, scaler) -> Tuple[np.ndarray, np.ndarray]:
        """(original, adversarial) mapped back to physical units."""
        return scaler.inverse(self.original), scaler.inverse(self.adversarial)


def prepare_input(access: ModelAccess, x) -> np.ndarray:
    """Validate a physical VitalVector and return it normalized and clipped into the box."""
    x = validate_vector(x, access.schema)
    return np.clip(access.scaler.transform(x), 0.0, 1.0)


def finalize(access: ModelAccess, original: np.ndarray, adversarial: np.ndarray, original_label: int,
             goal: AttackGoal, queries_used: int, attack: str,
             true_label: Optional[int] = None, **extra) -> CraftResult:
    """
    Build a CraftResult, re-checking the adversarial label on the classifier
    directly (the check is not charged to the query counter).
    """
    adversarial = np.asarray(adversarial, dtype=np.float64)
    if not np.all(np.isfinite(adversarial)):
        raise InvalidInputError(f"{attack} produced a non-finite adversarial vector")
    adv_label = int(access.classifier.labels_normalized(adversarial[None, :])[0])
    delta = adversarial - original
    touched = np.flatnonzero(np.abs(delta) > TOUCH_TOLERANCE)
    return CraftResult(
        original=original,
        adversarial=adversarial,
        original_label=PatientState(int(original_label)),
        adversarial_label=PatientState(adv_label),
        success=goal.reached(adv_label, original_label),
        queries_used=int(queries_used),
        linf_norm=float(np.max(np.abs(delta))) if delta.size else 0.0,
        l2_norm=float(np.linalg.norm(delta)),
        devices_touched=access.schema.devices_touching(touched),
        attack=attack,
        target=goal.target,
        true_label=None if true_label is None else PatientState(int(true_label)),
        extra=dict(extra),
    )


def skipped_result(original: np.ndarray, original_label: int, goal: AttackGoal, attack: str,
                   queries_used: int = 0, true_label: Optional[int] = None,
                   error: Optional[str] = None) -> CraftResult:
    """Record for a sample that was not attacked (already at target, or the attempt failed)."""
    return CraftResult(
        original=original,
        adversarial=np.array(original, copy=True),
        original_label=PatientState(int(original_label)),
        adversarial_label=PatientState(int(original_label)),
        success=False,
        queries_used=int(queries_used),
        linf_norm=0.0,
        l2_norm=0.0,
        devices_touched=frozenset(),
        attack=attack,
        target=goal.target,
        true_label=None if true_label is None else PatientState(int(true_label)),
        skipped=error is None,
        error=error,
    )
