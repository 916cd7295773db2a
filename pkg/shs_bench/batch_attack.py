"""
Batch Attack Runner

Applies one evasion attack to every sample of a slice. Each sample gets its
own query session and an RNG derived from (base_seed, index), so a batch is
reproducible and independent of how samples are scheduled.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from .attack_core import AttackConstraints, AttackGoal, CraftResult, prepare_input, skipped_result
from .decision_attacks import HopSkipJumpParams, decision_tree_attack, hop_skip_jump
from .errors import CapabilityError, ConfigurationError, ShsBenchError
from .gradient_attacks import CarliniWagnerParams, carlini_wagner, fgm
from .models import Capability, ModelAccess
from .zoo_attack import ZooParams, zoo

logger = logging.getLogger(__name__)

RESULT_COLUMNS = ["index", "orig_label", "adv_label", "success", "queries", "linf", "l2",
                  "devices_touched", "status"]


class AttackKind(Enum):
    HOP_SKIP_JUMP = "hsj"
    FGM = "fgm"
    CARLINI_WAGNER = "cw"
    ZOO = "zoo"
    DECISION_TREE = "dt"

    @classmethod
    def parse(cls, text: Union[str, "AttackKind"]) -> "AttackKind":
        if isinstance(text, cls):
            return text
        key = str(text).strip().lower().replace("-", "_")
        aliases = {"hop_skip_jump": "hsj", "hopskipjump": "hsj", "carlini_wagner": "cw",
                   "c&w": "cw", "decision_tree": "dt", "fgsm": "fgm"}
        key = aliases.get(key, key)
        for kind in cls:
            if kind.value == key:
                return kind
        options = ", ".join(k.value for k in cls)
        raise ConfigurationError(f"Unknown attack '{text}'. Available: {options}")

    @property
    def required_operation(self) -> str:
        return {
            AttackKind.HOP_SKIP_JUMP: "labels",
            AttackKind.FGM: "gradient",
            AttackKind.CARLINI_WAGNER: "gradient",
            AttackKind.ZOO: "scores",
            AttackKind.DECISION_TREE: "structure",
        }[self]

    @property
    def capability(self) -> Capability:
        """Narrowest access level the attack can run with."""
        return {
            AttackKind.HOP_SKIP_JUMP: Capability.LABEL,
            AttackKind.FGM: Capability.GRADIENT,
            AttackKind.CARLINI_WAGNER: Capability.GRADIENT,
            AttackKind.ZOO: Capability.SCORE,
            AttackKind.DECISION_TREE: Capability.STRUCTURE,
        }[self]


@dataclass(frozen=True)
class AttackParams:
    """Per-algorithm knobs; only the record for the chosen attack is used."""

    carlini_wagner: CarliniWagnerParams = field(default_factory=CarliniWagnerParams)
    hop_skip_jump: HopSkipJumpParams = field(default_factory=HopSkipJumpParams)
    zoo: ZooParams = field(default_factory=ZooParams)
    leaf_offset: float = 0.01
    # step size for fgm when the constraints carry no threshold
    fgm_epsilon: float = 0.1


def derived_rng(base_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(base_seed), int(index)]))


def run_attack(kind: AttackKind, access: ModelAccess, x, goal: AttackGoal, constraints: AttackConstraints,
               params: AttackParams = AttackParams(), rng: Optional[np.random.Generator] = None,
               starting_points: Optional[np.ndarray] = None,
               true_label: Optional[int] = None) -> CraftResult:
    """Dispatch one crafting attempt to the algorithm named by kind."""
    if kind is AttackKind.FGM:
        if constraints.threshold is None:
            constraints = constraints.with_threshold(params.fgm_epsilon)
        return fgm(access, x, goal, constraints, true_label)
    if kind is AttackKind.CARLINI_WAGNER:
        return carlini_wagner(access, x, goal, constraints, params.carlini_wagner, true_label)
    if kind is AttackKind.HOP_SKIP_JUMP:
        return hop_skip_jump(access, x, goal, constraints, params.hop_skip_jump, rng, starting_points, true_label)
    if kind is AttackKind.ZOO:
        return zoo(access, x, goal, constraints, params.zoo, rng, true_label)
    return decision_tree_attack(access, x, goal, constraints, params.leaf_offset, true_label)


def batch_attack(access: ModelAccess, X, goal: Union[AttackGoal, Sequence[AttackGoal]],
                 constraints: AttackConstraints, attack: Union[str, AttackKind],
                 base_seed: int = 0, true_labels: Optional[Sequence[int]] = None,
                 params: AttackParams = AttackParams(),
                 starting_points: Optional[dict] = None,
                 progress: bool = False) -> List[CraftResult]:
    """
    Attack every row of X (physical units) and return results in row order.

    goal may be one AttackGoal or one per row. starting_points maps a target
    class to a pool of normalized points for targeted HopSkipJump. Targeted
    rows already predicted as the target are recorded as skipped; a row
    whose attempt raises is recorded with its error text.
    """
    kind = AttackKind.parse(attack)
    if not access.allows(kind.required_operation):
        raise CapabilityError(f"Attack '{kind.value}' needs {kind.required_operation} access, "
                              f"victim offers {access.capability.name}")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64)) if len(X) else np.empty((0, len(access.schema)))
    goals = [goal] * len(X) if isinstance(goal, AttackGoal) else list(goal)
    if len(goals) != len(X):
        raise ConfigurationError(f"{len(goals)} goals given for {len(X)} samples")
    labels = [None] * len(X) if true_labels is None else [int(v) for v in true_labels]

    results: List[CraftResult] = []
    rows = tqdm(range(len(X)), desc=f"{kind.value} attack", disable=not progress, leave=False)
    for i in rows:
        session = access.session()
        g = goals[i]
        z0 = prepare_input(session, X[i])
        original_label = int(session.classifier.labels_normalized(z0[None, :])[0])
        if g.is_targeted and original_label == int(g.target):
            results.append(skipped_result(z0, original_label, g, kind.value, true_label=labels[i]))
            continue
        pool = None
        if starting_points is not None and g.is_targeted:
            pool = starting_points.get(int(g.target))
        try:
            result = run_attack(kind, session, X[i], g, constraints, params, derived_rng(base_seed, i),
                                pool, labels[i])
        except (ShsBenchError, ArithmeticError, ValueError) as exc:
            logger.warning("Sample %d: %s failed: %s", i, kind.value, exc)
            result = skipped_result(z0, original_label, g, kind.value, session.queries, labels[i], str(exc))
        results.append(result)

    logger.info("%s batch: %d samples, %d successes", kind.value, len(results),
                sum(r.success for r in results))
    return results


def result_status(result: CraftResult) -> str:
    if result.error is not None:
        return "error"
    return "skipped" if result.skipped else "ok"


def results_to_frame(results: Sequence[CraftResult], schema=None) -> pd.DataFrame:
    """One row per result; devices_touched is a ';'-joined list of device names (or ids)."""
    rows = []
    for i, r in enumerate(results):
        devices = sorted(r.devices_touched)
        if schema is not None:
            devices = [schema.devices[d].name for d in devices]
        rows.append({
            "index": i,
            "orig_label": r.original_label.display_name,
            "adv_label": r.adversarial_label.display_name,
            "success": bool(r.success),
            "queries": int(r.queries_used),
            "linf": r.linf_norm,
            "l2": r.l2_norm,
            "devices_touched": ";".join(str(d) for d in devices),
            "status": result_status(r),
        })
    return pd.DataFrame(rows, columns=RESULT_COLUMNS)


def export_results_csv(results: Sequence[CraftResult], path: Union[str, Path], schema=None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    results_to_frame(results, schema).to_csv(path, index=False, float_format="%.9g", lineterminator="\n")
    return path


def target_pools(access: ModelAccess, train_ds, per_class: int = 25) -> dict:
    """
    Normalized training samples per class, used to seed targeted
    HopSkipJump runs. Rows come in dataset order, capped at per_class.
    """
    Z = np.clip(access.scaler.transform(train_ds.X), 0.0, 1.0)
    pools = {}
    for label in np.unique(train_ds.y):
        rows = np.flatnonzero(train_ds.y == label)[:per_class]
        pools[int(label)] = Z[rows]
    return pools
