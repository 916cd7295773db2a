import itertools

import numpy as np
import pytest

from shs_bench.attack_core import AttackConstraints, AttackGoal, prepare_input
from shs_bench.batch_attack import target_pools
from shs_bench.dataset import Scaler
from shs_bench.decision_attacks import (
    HopSkipJumpParams,
    craft_for_leaf,
    decision_tree_attack,
    hop_skip_jump,
    path_intervals,
)
from shs_bench.device_analysis import shifted_targets
from shs_bench.errors import CapabilityError
from shs_bench.models import Algorithm, Capability, ModelAccess, TrainingConfig
from shs_bench.schema import NUM_STATES
from shs_bench.tree_classifiers import LEAF, DecisionTree, TreeExport

SPLIT_FEATURES = 4


def random_tree(rng: np.random.Generator, max_depth: int, n_classes: int = 3) -> TreeExport:
    """Random preorder tree over the first few features, leaves one-hot over n_classes."""
    feature, threshold, left, right, value = [], [], [], [], []

    def grow(depth: int) -> int:
        node = len(feature)
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(np.zeros(NUM_STATES))
        if depth < max_depth and rng.uniform() < 0.8:
            feature[node] = int(rng.integers(SPLIT_FEATURES))
            threshold[node] = float(rng.uniform(0.05, 0.95))
            left[node] = grow(depth + 1)
            right[node] = grow(depth + 1)
        else:
            value[node][int(rng.integers(n_classes))] = 1.0
        return node

    grow(0)
    return TreeExport(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        value=np.array(value),
    )


def tree_access(schema, tree: TreeExport) -> ModelAccess:
    model = DecisionTree(TrainingConfig(Algorithm.DECISION_TREE, 0), Scaler.identity(len(schema)), schema, tree)
    return ModelAccess(model, Capability.STRUCTURE)


def brute_force_min_changes(tree: TreeExport, z0: np.ndarray, goal: AttackGoal, features) -> float:
    """Fewest features to change so the tree's class meets the goal; inf when impossible."""
    original = tree.leaf_class(int(tree.apply(z0[None, :])[0]))
    internal = tree.feature != LEAF
    candidates = {}
    for f in features:
        cuts = tree.threshold[internal & (tree.feature == f)]
        candidates[f] = sorted({0.0, 1.0, *cuts.tolist(), *(cuts + 1e-9).tolist()})
    for k in range(len(features) + 1):
        for subset in itertools.combinations(features, k):
            grid = list(itertools.product(*(candidates[f] for f in subset)))
            Z = np.repeat(z0[None, :], len(grid), axis=0)
            if subset:
                Z[:, list(subset)] = np.array(grid)
            classes = np.argmax(tree.value[tree.apply(Z)], axis=1)
            if any(goal.reached(int(c), original) for c in classes):
                return k
    return float("inf")


@pytest.mark.parametrize("case", range(100))
def test_leaf_search_changes_fewest_features(schema, case):
    rng = np.random.default_rng(case)
    tree = random_tree(rng, max_depth=int(rng.integers(1, 5)))
    access = tree_access(schema, tree)
    z0 = rng.uniform(0.0, 1.0, size=len(schema))
    goal = AttackGoal.untargeted() if case % 2 else AttackGoal.targeted(int(rng.integers(3)))

    result = decision_tree_attack(access, z0, goal, AttackConstraints())
    expected = brute_force_min_changes(tree, z0, goal, list(range(SPLIT_FEATURES)))
    if np.isinf(expected):
        assert not result.success
    else:
        assert result.success
        assert np.count_nonzero(result.adversarial != result.original) == expected


@pytest.mark.parametrize("case", range(30))
def test_leaf_search_respects_feature_mask(schema, case):
    rng = np.random.default_rng(1000 + case)
    tree = random_tree(rng, max_depth=3)
    access = tree_access(schema, tree)
    z0 = rng.uniform(0.0, 1.0, size=len(schema))
    goal = AttackGoal.untargeted()
    constraints = AttackConstraints(feature_mask={1})

    result = decision_tree_attack(access, z0, goal, constraints)
    assert set(result.changed_features.tolist()) <= {1}
    assert result.success == np.isfinite(brute_force_min_changes(tree, z0, goal, [1]))


def test_path_intervals_bound_the_leaf(schema):
    tree = random_tree(np.random.default_rng(3), max_depth=3)
    for leaf in tree.leaves:
        lo, hi = path_intervals(tree, int(leaf), len(schema))
        if np.any(lo >= hi):
            continue
        z = np.where(np.isfinite(lo), lo, 0.0) + 1e-9
        z = np.where(np.isfinite(hi), np.minimum(z, hi), z)
        assert tree.apply(z[None, :])[0] == leaf


def test_craft_for_leaf_respects_threshold():
    tree = TreeExport(
        feature=np.array([0, LEAF, LEAF]),
        threshold=np.array([0.5, 0.0, 0.0]),
        left=np.array([1, -1, -1]),
        right=np.array([2, -1, -1]),
        value=np.eye(NUM_STATES)[[0, 0, 1]],
    )
    z0 = np.full(15, 0.2)
    mask = np.ones(15, dtype=bool)
    assert craft_for_leaf(tree, 2, z0, mask, threshold=0.1) is None
    moved = craft_for_leaf(tree, 2, z0, mask, threshold=None)
    assert moved[0] == pytest.approx(0.51)
    assert np.array_equal(moved[1:], z0[1:])


def test_decision_tree_attack_needs_structure(victims, test_ds):
    with pytest.raises(CapabilityError):
        decision_tree_attack(ModelAccess(victims["dt"], Capability.LABEL), test_ds.X[0],
                             AttackGoal.untargeted(), AttackConstraints())


def test_trained_tree_is_always_evaded(victims, test_ds):
    access = ModelAccess(victims["dt"], Capability.STRUCTURE)
    for x in test_ds.X[:20]:
        assert decision_tree_attack(access.session(), x, AttackGoal.untargeted(), AttackConstraints()).success


def test_hop_skip_jump_targeted_with_pools(victims, train_ds, test_ds):
    access = ModelAccess(victims["dt"], Capability.LABEL)
    pools = target_pools(access, train_ds)
    goals = shifted_targets(test_ds.y[:5])
    params = HopSkipJumpParams(max_iterations=5)
    constraints = AttackConstraints(query_budget=2000)
    for i, goal in enumerate(goals):
        session = access.session()
        result = hop_skip_jump(session, test_ds.X[i], goal, constraints, params,
                               np.random.default_rng(i), pools[int(goal.target)])
        assert result.success
        assert result.queries_used <= 2000
        trace = result.extra.get("trace", [])
        assert trace == sorted(trace, reverse=True)


def test_hop_skip_jump_respects_budget_and_threshold(victims, test_ds):
    access = ModelAccess(victims["rf"], Capability.LABEL)
    constraints = AttackConstraints(threshold=0.05, query_budget=150)
    for i, x in enumerate(test_ds.X[:5]):
        session = access.session()
        result = hop_skip_jump(session, x, AttackGoal.untargeted(), constraints,
                               HopSkipJumpParams(max_iterations=10), np.random.default_rng(i))
        assert result.queries_used <= 150
        assert result.linf_norm <= 0.05 + 1e-12


@pytest.mark.parametrize("targeted", [False, True])
def test_hop_skip_jump_queries_stay_in_the_threshold_ball(monkeypatch, victims, train_ds, test_ds, schema,
                                                          targeted):
    queried = []
    plain_labels = ModelAccess.labels

    def recording_labels(self, Z):
        queried.append(np.atleast_2d(np.array(Z, dtype=np.float64)))
        return plain_labels(self, Z)

    monkeypatch.setattr(ModelAccess, "labels", recording_labels)
    access = ModelAccess(victims["rf"], Capability.LABEL)
    pools = target_pools(access, train_ds) if targeted else {}
    constraints = AttackConstraints.from_devices(schema, [0, 6], threshold=0.05, query_budget=1500)
    mask = constraints.mask_array(len(schema))
    goals = shifted_targets(test_ds.y[:4]) if targeted else [AttackGoal.untargeted()] * 4
    for i, goal in enumerate(goals):
        session = access.session()
        z0 = prepare_input(session, test_ds.X[i])
        queried.clear()
        hop_skip_jump(session, test_ds.X[i], goal, constraints, HopSkipJumpParams(max_iterations=10),
                      np.random.default_rng(i), pools.get(int(goal.target)) if targeted else None)
        points = np.vstack(queried)
        assert np.max(np.abs(points - z0)) <= 0.05 + 1e-12
        assert np.array_equal(points[:, ~mask], np.broadcast_to(z0[~mask], points[:, ~mask].shape))
        assert np.all((points >= 0.0) & (points <= 1.0))
