"""
Targeted-Device Analyses

minimal_device_search finds the smallest set of compromised devices that
lets an attack reach its goal on one sample. device_reduction_sweep and
threshold_sweep tabulate batch metrics as devices are taken away from the
adversary or as the perturbation budget grows.
"""

import itertools
import logging
from dataclasses import dataclass
from enum import Enum
from typing import FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .attack_core import AttackConstraints, AttackGoal, CraftResult
from .batch_attack import AttackKind, AttackParams, batch_attack, derived_rng, run_attack
from .dataset import Dataset
from .errors import ConfigurationError
from .metrics import attack_metrics
from .models import ModelAccess
from .schema import NUM_STATES
from .workers import ResultTable, run_cells
from .zoo_attack import margin_loss

logger = logging.getLogger(__name__)

# Default device-reduction order: glucose, then blood oxygen, then heart rate
DEFAULT_REMOVAL_ORDER = ("glucose", "oxygen", "heartrate")


class SearchStrategy(Enum):
    EXHAUSTIVE = "exhaustive"
    GREEDY = "greedy"


@dataclass(frozen=True)
class DeviceSearchResult:
    devices: Optional[FrozenSet[int]]
    result: Optional[CraftResult]
    subsets_tried: int

    @property
    def feasible(self) -> bool:
        return self.devices is not None

    @property
    def size(self) -> Optional[int]:
        return None if self.devices is None else len(self.devices)


def _subset_seed(devices: Iterable[int]) -> int:
    return sum(1 << d for d in devices)


class _DeviceProbe:
    """Runs one attack under a device mask; each subset gets its own session and RNG."""

    def __init__(self, access: ModelAccess, x, goal: AttackGoal, kind: AttackKind,
                 constraints: AttackConstraints, params: AttackParams, seed: int,
                 starting_points: Optional[np.ndarray], true_label: Optional[int]):
        self.access = access
        self.x = x
        self.goal = goal
        self.kind = kind
        self.constraints = constraints
        self.params = params
        self.seed = seed
        self.starting_points = starting_points
        self.true_label = true_label
        self.tried = 0

    def attempt(self, devices: Sequence[int]) -> CraftResult:
        self.tried += 1
        constraints = self.constraints.with_mask(self.access.schema.features_of(devices))
        return run_attack(self.kind, self.access.session(), self.x, self.goal, constraints, self.params,
                          derived_rng(self.seed, _subset_seed(devices)), self.starting_points, self.true_label)

    def loss(self, result: CraftResult) -> float:
        """Score margin left to close at the crafted point; lower is closer to the goal."""
        scores = self.access.classifier.scores_normalized(result.adversarial[None, :])
        t = int(self.goal.target) if self.goal.is_targeted else int(result.original_label)
        return float(margin_loss(scores, t, self.goal.is_targeted, np.inf)[0])


def minimal_device_search(access: ModelAccess, x, goal: AttackGoal, attack: Union[str, AttackKind],
                          strategy: SearchStrategy = SearchStrategy.EXHAUSTIVE,
                          constraints: AttackConstraints = AttackConstraints(),
                          params: AttackParams = AttackParams(), seed: int = 0,
                          starting_points: Optional[np.ndarray] = None,
                          true_label: Optional[int] = None) -> DeviceSearchResult:
    """
    Smallest device set under which the attack succeeds on x.

    Exhaustive walks the non-empty subsets by size, then lexicographically,
    so every strict subset of the returned set has already failed. Greedy
    adds, one at a time, the device whose crafted point leaves the smallest
    score margin. The attack must first succeed with every device available;
    otherwise the result is infeasible.
    """
    kind = AttackKind.parse(attack)
    strategy = SearchStrategy(strategy)
    probe = _DeviceProbe(access, x, goal, kind, constraints.with_mask(None), params, seed,
                         starting_points, true_label)
    all_devices = tuple(d.id for d in access.schema.devices)

    unrestricted = probe.attempt(all_devices)
    if not unrestricted.success:
        logger.debug("Device search: %s fails even with all devices", kind.value)
        return DeviceSearchResult(None, unrestricted, probe.tried)

    if strategy is SearchStrategy.EXHAUSTIVE:
        for size in range(1, len(all_devices)):
            for subset in itertools.combinations(all_devices, size):
                result = probe.attempt(subset)
                if result.success:
                    return DeviceSearchResult(frozenset(subset), result, probe.tried)
        return DeviceSearchResult(frozenset(all_devices), unrestricted, probe.tried)

    chosen: List[int] = []
    while len(chosen) < len(all_devices) - 1:
        best: Optional[Tuple[float, int, CraftResult]] = None
        for device in all_devices:
            if device in chosen:
                continue
            subset = tuple(sorted(chosen + [device]))
            result = probe.attempt(subset)
            if result.success:
                return DeviceSearchResult(frozenset(subset), result, probe.tried)
            key = (probe.loss(result), device)
            if best is None or key < best[:2]:
                best = (key[0], device, result)
        chosen.append(best[1])
    return DeviceSearchResult(frozenset(all_devices), unrestricted, probe.tried)


def shifted_targets(labels: Sequence[int]) -> List[AttackGoal]:
    """Default targeted goals: (label + 1) mod 11 for every sample."""
    return [AttackGoal.targeted((int(v) + 1) % NUM_STATES) for v in labels]


Pairing = Tuple[AttackKind, ModelAccess]


def batch_metrics(kind: AttackKind, access: ModelAccess, data: Dataset, goal, constraints: AttackConstraints,
                  params: AttackParams, base_seed: int, starting_points: Optional[dict]) -> dict:
    """Run one batch and aggregate it into a metrics row."""
    results = batch_attack(access, data.X, goal, constraints, kind, base_seed, data.y, params, starting_points)
    return attack_metrics(results).as_row()


def _resolve_order(access_schema, removal_order: Sequence) -> List[int]:
    ids = []
    for item in removal_order:
        device = access_schema.devices[int(item)] if isinstance(item, (int, np.integer)) \
            else access_schema.device_by_name(str(item))
        if device.id in ids:
            raise ConfigurationError(f"Device '{device.name}' appears twice in the removal order")
        ids.append(device.id)
    return ids


def _sweep(pairings: Sequence[Pairing], data: Dataset, goal, cell_constraints: Sequence[Tuple[dict, AttackConstraints]],
           params: AttackParams, base_seed: int, starting_points: Optional[dict], jobs: int,
           progress: bool) -> ResultTable:
    cells = []
    for kind, access in pairings:
        kind = AttackKind.parse(kind)
        for labels, constraints in cell_constraints:
            key = (kind.value, access.classifier.algorithm.value, *labels.values())
            cells.append((key, (kind, access, data, goal, constraints, params, base_seed, starting_points)))

    outcomes = run_cells(batch_metrics, cells, jobs, "sweep cells", progress)
    rows, failures = [], []
    label_names = list(cell_constraints[0][0]) if cell_constraints else []
    for outcome in outcomes:
        attack, model, *labels = outcome.key
        row = {"attack": attack, "model": model, **dict(zip(label_names, labels))}
        if outcome.ok:
            row.update(outcome.value)
        else:
            failures.append(f"{outcome.key}: {outcome.error}")
        rows.append(row)
    return ResultTable(pd.DataFrame(rows), failures)


def device_reduction_sweep(pairings: Sequence[Pairing], data: Dataset, goal,
                           removal_order: Sequence = DEFAULT_REMOVAL_ORDER,
                           constraints: AttackConstraints = AttackConstraints(),
                           params: AttackParams = AttackParams(), base_seed: int = 0,
                           starting_points: Optional[dict] = None, jobs: int = 1,
                           progress: bool = False) -> ResultTable:
    """
    Batch metrics for k = 0..len(removal_order) removed devices.

    Row k masks out the features of the first k devices of removal_order;
    k = 0 is the unmasked baseline.
    """
    if not pairings:
        raise ConfigurationError("device_reduction_sweep needs at least one (attack, model) pairing")
    schema = pairings[0][1].schema
    order = _resolve_order(schema, removal_order)
    steps = []
    for k in range(len(order) + 1):
        removed = order[:k]
        masked = AttackConstraints.excluding_devices(schema, removed, constraints.threshold,
                                                     constraints.query_budget)
        names = ";".join(schema.devices[d].name for d in removed)
        steps.append(({"removed": k, "removed_devices": names}, masked))
    return _sweep(pairings, data, goal, steps, params, base_seed, starting_points, jobs, progress)


def threshold_sweep(pairings: Sequence[Pairing], data: Dataset, goal, thresholds: Sequence[float],
                    constraints: AttackConstraints = AttackConstraints(),
                    params: AttackParams = AttackParams(), base_seed: int = 0,
                    starting_points: Optional[dict] = None, jobs: int = 1,
                    progress: bool = False) -> ResultTable:
    """Batch metrics per (attack, threshold) with that L-inf budget applied."""
    if not pairings:
        raise ConfigurationError("threshold_sweep needs at least one (attack, model) pairing")
    for t in thresholds:
        if not 0.0 < t <= 1.0:
            raise ConfigurationError(f"Thresholds must lie in (0, 1], got {t}")
    steps = [({"threshold": float(t)}, constraints.with_threshold(float(t))) for t in thresholds]
    return _sweep(pairings, data, goal, steps, params, base_seed, starting_points, jobs, progress)


def is_mostly_monotone(values: Sequence[float], increasing: bool = True, share: float = 0.8) -> bool:
    """True when at least `share` of adjacent steps move in the expected direction (ties count)."""
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        return True
    steps = np.diff(values)
    good = steps >= 0 if increasing else steps <= 0
    return float(np.mean(good)) >= share
