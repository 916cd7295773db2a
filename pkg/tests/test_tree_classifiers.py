import numpy as np
import pytest

from shs_bench.errors import CapabilityError, ConfigurationError
from shs_bench.metrics import evaluate
from shs_bench.models import Algorithm, ForestParams, TrainingConfig, train
from shs_bench.tree_classifiers import LEAF, fit_tree, gini


def test_gini():
    assert gini(np.array([3, 3, 3])) == 0.0
    assert gini(np.array([0, 1, 0, 1])) == pytest.approx(0.5)
    assert gini(np.array([], dtype=int)) == 0.0


def test_fit_tree_separates_threshold():
    rng = np.random.default_rng(0)
    Z = rng.uniform(0, 1, size=(200, 15))
    y = (Z[:, 2] > 0.5).astype(int)
    tree = fit_tree(Z, y, max_depth=3, min_leaf=1)
    assert np.array_equal(tree.replay(Z), y)
    assert tree.feature[0] == 2
    assert 0.4 < tree.threshold[0] < 0.6


def test_fit_tree_rejects_empty():
    with pytest.raises(ConfigurationError):
        fit_tree(np.empty((0, 15)), np.empty(0, dtype=int))


def test_tree_export_is_consistent(victims, test_ds):
    model = victims["dt"]
    tree = model.tree_structure()
    Z = model.scaler.transform(test_ds.X)
    assert np.array_equal(tree.replay(Z), model.labels_normalized(Z))
    assert tree.n_leaves + tree.n_internal == tree.n_nodes
    assert tree.depth() <= model.config.hyperparameters.max_depth
    assert tree.parent[0] == -1
    for leaf in tree.leaves[:20]:
        assert tree.ancestors(int(leaf))[-1] == 0
        assert tree.feature[leaf] == LEAF


def test_tree_path_matches_apply(victims, test_ds):
    model = victims["dt"]
    tree = model.tree_structure()
    z = model.scaler.transform(test_ds.X[:1])
    leaf = int(tree.apply(z)[0])
    for node, went_left in tree.path(leaf):
        assert (z[0, tree.feature[node]] <= tree.threshold[node]) == went_left


def test_subtree_leaves_are_preorder(victims):
    tree = victims["dt"].tree_structure()
    leaves = tree.subtree_leaves(0)
    assert leaves == sorted(leaves)
    assert set(leaves) == set(int(v) for v in tree.leaves)


def test_tree_victims_reach_accuracy(victims, test_ds):
    assert victims["dt"].train_accuracy > 80.0
    assert evaluate(victims["dt"], test_ds).accuracy > 70.0
    assert evaluate(victims["rf"], test_ds).accuracy > 70.0


def test_forest_scores_are_vote_shares(victims, test_ds):
    model = victims["rf"]
    scores = model.scores_normalized(model.scaler.transform(test_ds.X))
    assert np.allclose(scores.sum(axis=1), 1.0)
    assert np.allclose(scores * len(model.trees), np.round(scores * len(model.trees)))


def test_forest_is_deterministic(train_ds):
    config = TrainingConfig(Algorithm.RANDOM_FOREST, 3, ForestParams(n_trees=3))
    a, b = train(config, train_ds), train(config, train_ds)
    for key, value in a.parameters().items():
        assert np.array_equal(value, b.parameters()[key])


def test_trees_have_no_gradient(victims):
    model = victims["rf"]
    with pytest.raises(CapabilityError):
        model.loss_gradient_normalized(np.zeros((1, 15)), np.array([0]))
    with pytest.raises(CapabilityError):
        model.tree_structure()
