"""
Decision-based attacks.

hop_skip_jump needs only predicted labels and works under the Chebyshev
(L-inf) distance throughout. decision_tree_attack reads the victim tree and
moves the sample into the nearest leaf of an adversarial class.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .attack_core import (
    AttackConstraints,
    AttackGoal,
    BudgetedOracle,
    BudgetExhausted,
    CraftResult,
    finalize,
    prepare_input,
    project,
)
from .errors import CapabilityError, ConfigurationError
from .models import ModelAccess
from .tree_classifiers import TreeExport

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class HopSkipJumpParams:
    max_iterations: int = 40
    initial_num_evals: int = 100
    max_num_evals: int = 10000
    binary_search_tolerance: float = 1e-4
    init_attempts: int = 10
    max_step_halvings: int = 25

    def __post_init__(self):
        if self.max_iterations < 1 or self.initial_num_evals < 1 or self.init_attempts < 1:
            raise ConfigurationError("HopSkipJump iteration, evaluation and restart counts must be >= 1")
        if not self.binary_search_tolerance > 0:
            raise ConfigurationError("binary_search_tolerance must be positive")


def _linf(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b))) if a.size else 0.0


def _linf_blend(origin: np.ndarray, point: np.ndarray, alpha: float) -> np.ndarray:
    return np.clip(point, origin - alpha, origin + alpha)


class _HopSkipJump:
    def __init__(self, oracle: BudgetedOracle, z0: np.ndarray, original_label: int, goal: AttackGoal,
                 constraints: AttackConstraints, mask: np.ndarray, params: HopSkipJumpParams,
                 rng: np.random.Generator):
        self.oracle = oracle
        self.z0 = z0
        self.original_label = original_label
        self.goal = goal
        self.constraints = constraints
        self.mask = mask
        self.params = params
        self.rng = rng
        self.d = int(np.count_nonzero(mask))

    def feasible(self, Z: np.ndarray) -> np.ndarray:
        """Rows moved onto the mask, threshold ball and box; every query goes through here."""
        return project(Z, self.z0, self.constraints, self.mask)

    def is_adversarial(self, Z: np.ndarray) -> np.ndarray:
        labels = self.oracle.labels(Z)
        if self.goal.is_targeted:
            return labels == int(self.goal.target)
        return labels != self.original_label

    def initialize(self, starting_points: Optional[np.ndarray]) -> Optional[np.ndarray]:
        """First adversarial point: nearest of the starting pool, else random restarts."""
        if starting_points is not None and len(starting_points):
            pool = self.feasible(np.atleast_2d(starting_points))
            ok = self.is_adversarial(pool)
            if np.any(ok):
                candidates = pool[ok]
                dists = np.max(np.abs(candidates - self.z0), axis=1)
                return candidates[int(np.argmin(dists))]
        for _ in range(self.params.init_attempts):
            noise = self.feasible(self.rng.uniform(0.0, 1.0, size=self.z0.shape))
            if self.is_adversarial(noise[None, :])[0]:
                return noise
        return None

    def binary_search(self, point: np.ndarray) -> Tuple[np.ndarray, float]:
        """Shrink the L-inf ball around z0 until just outside the boundary."""
        high = _linf(point, self.z0)
        low = 0.0
        while high - low > self.params.binary_search_tolerance:
            mid = (high + low) / 2.0
            if self.is_adversarial(_linf_blend(self.z0, point, mid)[None, :])[0]:
                high = mid
            else:
                low = mid
        out = _linf_blend(self.z0, point, high)
        return out, _linf(out, self.z0)

    def approximate_gradient(self, point: np.ndarray, num_evals: int, delta: float) -> np.ndarray:
        rv = self.rng.uniform(-1.0, 1.0, size=(num_evals, self.z0.size)) * self.mask
        norms = np.linalg.norm(rv, axis=1, keepdims=True)
        rv = rv / np.where(norms > 0, norms, 1.0)
        perturbed = self.feasible(point + delta * rv)
        rv = (perturbed - point) / delta
        fval = 2.0 * self.is_adversarial(perturbed).astype(np.float64) - 1.0
        if np.all(fval == 1.0):
            grad = rv.mean(axis=0)
        elif np.all(fval == -1.0):
            grad = -rv.mean(axis=0)
        else:
            grad = ((fval - fval.mean())[:, None] * rv).mean(axis=0)
        norm = np.linalg.norm(grad)
        return grad / norm if norm > 0 else grad

    def step_size(self, point: np.ndarray, update: np.ndarray, dist: float, iteration: int) -> Optional[float]:
        """Halve the step from dist/sqrt(t) until the step lands on the adversarial side."""
        eps = dist / np.sqrt(iteration)
        for _ in range(self.params.max_step_halvings):
            if self.is_adversarial(self.feasible(point + eps * update)[None, :])[0]:
                return eps
            eps /= 2.0
        return None


def hop_skip_jump(access: ModelAccess, x, goal: AttackGoal, constraints: AttackConstraints,
                  params: HopSkipJumpParams = HopSkipJumpParams(),
                  rng: Optional[np.random.Generator] = None,
                  starting_points: Optional[np.ndarray] = None,
                  true_label: Optional[int] = None) -> CraftResult:
    """
    Label-only boundary attack under L-inf.

    starting_points (normalized, typically training samples of the target
    class) seed a targeted run. Every queried point lies inside the mask,
    the threshold ball and the box, so under a threshold the search stops at
    the first adversarial point it finds. Returns the best adversarial point
    found; the per-iteration distance trace is in result.extra["trace"].
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    oracle = BudgetedOracle(access, constraints.query_budget)
    z0 = prepare_input(access, x)
    mask = constraints.mask_array(z0.size)
    trace: List[float] = []

    try:
        original_label = oracle.label(z0)
    except BudgetExhausted:
        original_label = int(access.classifier.labels_normalized(z0[None, :])[0])
        return finalize(access, z0, z0.copy(), original_label, goal, access.queries, "hop_skip_jump", true_label)

    if goal.is_targeted and original_label == int(goal.target):
        return finalize(access, z0, z0.copy(), original_label, goal, access.queries, "hop_skip_jump", true_label)
    if not mask.any():
        return finalize(access, z0, z0.copy(), original_label, goal, access.queries, "hop_skip_jump", true_label)

    search = _HopSkipJump(oracle, z0, original_label, goal, constraints, mask, params, rng)
    best = None
    try:
        start = search.initialize(starting_points)
        if start is None:
            logger.debug("hop_skip_jump: no initial adversarial point")
        else:
            best, dist = search.binary_search(start)
            trace.append(dist)
            for t in range(1, params.max_iterations + 1):
                if constraints.threshold is not None and dist <= constraints.threshold:
                    break
                delta = 0.1 if t == 1 else dist / search.d
                num_evals = min(int(params.initial_num_evals * np.sqrt(t)), params.max_num_evals)
                num_evals = max(min(num_evals, oracle.remaining), 1)
                grad = search.approximate_gradient(best, num_evals, delta)
                update = np.sign(grad)
                if not update.any():
                    break
                eps = search.step_size(best, update, dist, t)
                if eps is not None:
                    candidate, new_dist = search.binary_search(search.feasible(best + eps * update))
                    if new_dist < dist:
                        best, dist = candidate, new_dist
                trace.append(dist)
    except BudgetExhausted:
        logger.debug("hop_skip_jump: query budget exhausted after %d queries", access.queries)

    final = z0.copy() if best is None else project(best, z0, constraints, mask)
    return finalize(access, z0, final, original_label, goal, access.queries, "hop_skip_jump",
                    true_label, trace=trace)


DEFAULT_LEAF_OFFSET = 0.01


def path_intervals(tree: TreeExport, leaf: int, n_features: int) -> Tuple[np.ndarray, np.ndarray]:
    """Per-feature (lo, hi] that a sample must satisfy to reach leaf."""
    lo = np.full(n_features, -np.inf)
    hi = np.full(n_features, np.inf)
    for node, went_left in tree.path(leaf):
        f = tree.feature[node]
        thr = tree.threshold[node]
        if went_left:
            hi[f] = min(hi[f], thr)
        else:
            lo[f] = max(lo[f], thr)
    return lo, hi


def _place(value: float, lo: float, hi: float, offset: float) -> Optional[float]:
    """A value in (lo, hi] within the unit box, offset from the violated bound."""
    top = min(hi, 1.0)
    if lo >= top or top < 0.0:
        return None
    candidate = lo + offset if value <= lo else hi - offset
    if lo < candidate <= top and candidate >= 0.0:
        return candidate
    return (max(lo, 0.0) + top) / 2.0


def craft_for_leaf(tree: TreeExport, leaf: int, z0: np.ndarray, mask: np.ndarray,
                   threshold: Optional[float], offset: float = DEFAULT_LEAF_OFFSET) -> Optional[np.ndarray]:
    """Move z0 into leaf, changing only the features whose path interval z0 violates."""
    lo, hi = path_intervals(tree, leaf, z0.size)
    z = z0.copy()
    for f in np.flatnonzero((z0 <= lo) | (z0 > hi)):
        if not mask[f]:
            return None
        value = _place(z0[f], lo[f], hi[f], offset)
        if value is None:
            return None
        if threshold is not None and abs(value - z0[f]) > threshold:
            value = float(np.clip(value, z0[f] - threshold, z0[f] + threshold))
            if not (lo[f] < value <= hi[f]):
                return None
        z[f] = value
    if tree.apply(z[None, :])[0] != leaf:
        return None
    return z


def decision_tree_attack(access: ModelAccess, x, goal: AttackGoal, constraints: AttackConstraints,
                         offset: float = DEFAULT_LEAF_OFFSET,
                         true_label: Optional[int] = None) -> CraftResult:
    """
    White-box leaf search.

    Leaves of a qualifying class are ranked by (features changed, distance
    from x's leaf up to the common ancestor, leaf index); the best one that
    the mask and threshold admit is used.
    """
    if not access.allows("structure"):
        raise CapabilityError(f"decision_tree_attack needs structure access, victim offers {access.capability.name}")
    tree = access.tree_structure()
    z0 = prepare_input(access, x)
    mask = constraints.mask_array(z0.size)
    original_label = int(access.labels(z0)[0])

    if goal.is_targeted and original_label == int(goal.target):
        return finalize(access, z0, z0.copy(), original_label, goal, access.queries, "decision_tree", true_label)

    home = int(tree.apply(z0[None, :])[0])
    lineage = tree.ancestors(home)
    rank_of = {node: i for i, node in enumerate(lineage)}

    best_key, best_z, best_leaf = None, None, None
    for leaf in tree.leaves:
        cls = tree.leaf_class(leaf)
        if not goal.reached(cls, original_label):
            continue
        z = craft_for_leaf(tree, int(leaf), z0, mask, constraints.threshold, offset)
        if z is None:
            continue
        common = next(node for node in tree.ancestors(int(leaf)) if node in rank_of)
        key = (int(np.count_nonzero(z != z0)), rank_of[common], int(leaf))
        if best_key is None or key < best_key:
            best_key, best_z, best_leaf = key, z, int(leaf)

    if best_z is None:
        logger.debug("decision_tree_attack: no reachable leaf of a qualifying class")
        return finalize(access, z0, z0.copy(), original_label, goal, access.queries, "decision_tree", true_label)
    return finalize(access, z0, best_z, original_label, goal, access.queries, "decision_tree",
                    true_label, leaf=best_leaf)
