import itertools

import numpy as np
import pytest

from shs_bench.attack_core import AttackConstraints, AttackGoal
from shs_bench.batch_attack import AttackKind
from shs_bench.decision_attacks import decision_tree_attack
from shs_bench.device_analysis import (
    SearchStrategy,
    device_reduction_sweep,
    is_mostly_monotone,
    minimal_device_search,
    shifted_targets,
    threshold_sweep,
)
from shs_bench.errors import ConfigurationError
from shs_bench.models import Capability, ModelAccess


@pytest.fixture
def tree_access(victims):
    return ModelAccess(victims["dt"], Capability.STRUCTURE)


def test_exhaustive_search_is_minimal(tree_access, test_ds, schema):
    goal = AttackGoal.untargeted()
    for x in test_ds.X[:5]:
        found = minimal_device_search(tree_access, x, goal, "dt")
        assert found.feasible
        assert found.result.success
        assert found.result.devices_touched <= found.devices
        for size in range(1, found.size):
            for subset in itertools.combinations(range(len(schema.devices)), size):
                constraints = AttackConstraints.from_devices(schema, subset)
                assert not decision_tree_attack(tree_access.session(), x, goal, constraints).success


def test_greedy_never_beats_exhaustive(tree_access, test_ds):
    goal = AttackGoal.untargeted()
    for x in test_ds.X[:5]:
        exhaustive = minimal_device_search(tree_access, x, goal, AttackKind.DECISION_TREE)
        greedy = minimal_device_search(tree_access, x, goal, "dt", strategy=SearchStrategy.GREEDY)
        assert greedy.feasible
        assert exhaustive.size <= greedy.size
        assert greedy.result.devices_touched <= greedy.devices


def test_zero_threshold_is_infeasible(tree_access, test_ds):
    found = minimal_device_search(tree_access, test_ds.X[0], AttackGoal.untargeted(), "dt",
                                  constraints=AttackConstraints(threshold=0.0))
    assert not found.feasible
    assert found.size is None
    assert found.subsets_tried == 1


def test_shifted_targets():
    goals = shifted_targets([0, 4, 10])
    assert [int(g.target) for g in goals] == [1, 5, 0]


def test_device_reduction_sweep(tree_access, test_ds):
    data = test_ds.subset(range(15))
    table = device_reduction_sweep([(AttackKind.DECISION_TREE, tree_access)], data, AttackGoal.untargeted())
    frame = table.frame
    assert not table.failures
    assert list(frame["removed"]) == [0, 1, 2, 3]
    assert frame["removed_devices"].iloc[0] == ""
    assert frame["removed_devices"].iloc[1] == tree_access.schema.device_by_name("glucose").name
    assert set(frame["attack"]) == {"dt"} and set(frame["model"]) == {"dt"}
    success = list(frame["success"])
    assert success == sorted(success, reverse=True)


def test_removal_order_rejects_duplicates(tree_access, test_ds):
    with pytest.raises(ConfigurationError):
        device_reduction_sweep([(AttackKind.DECISION_TREE, tree_access)], test_ds.subset(range(3)),
                               AttackGoal.untargeted(), removal_order=["glucose", 1])


def test_threshold_sweep(tree_access, test_ds):
    data = test_ds.subset(range(15))
    table = threshold_sweep([(AttackKind.DECISION_TREE, tree_access)], data, AttackGoal.untargeted(),
                            thresholds=[0.01, 0.1, 0.3, 1.0])
    frame = table.frame
    assert list(frame["threshold"]) == [0.01, 0.1, 0.3, 1.0]
    success = list(frame["success"])
    assert success == sorted(success)
    assert (frame["mean_linf"].dropna() <= 1.0).all()


@pytest.mark.parametrize("thresholds", [[0.0], [1.5], [0.1, -0.2]])
def test_threshold_sweep_validation(tree_access, test_ds, thresholds):
    with pytest.raises(ConfigurationError):
        threshold_sweep([(AttackKind.DECISION_TREE, tree_access)], test_ds.subset(range(2)),
                        AttackGoal.untargeted(), thresholds=thresholds)


def test_sweeps_need_pairings(test_ds):
    with pytest.raises(ConfigurationError):
        threshold_sweep([], test_ds, AttackGoal.untargeted(), thresholds=[0.1])
    with pytest.raises(ConfigurationError):
        device_reduction_sweep([], test_ds, AttackGoal.untargeted())


def test_is_mostly_monotone():
    assert is_mostly_monotone([1, 2, 3])
    assert not is_mostly_monotone([3, 2, 1])
    assert is_mostly_monotone([3, 2, 1], increasing=False)
    assert not is_mostly_monotone([1, 2, 1, 2, 3])
    assert is_mostly_monotone([1, 2, 1, 2, 3], share=0.75)
    assert is_mostly_monotone([5])
    assert is_mostly_monotone(np.array([1.0, 1.0, 1.0]))
