"""
CART decision tree and random forest, from scratch.

Trees are stored as flat node arrays (feature, threshold, left, right,
value) in preorder. A sample goes left when z[feature] <= threshold; leaves
have feature == -1. Thresholds are midpoints between consecutive distinct
training values, chosen by Gini impurity.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .dataset import Scaler
from .errors import ConfigurationError
from .models import Algorithm, Classifier, TrainingConfig, accuracy_percent, check_labels
from .schema import NUM_STATES, FeatureSchema

logger = logging.getLogger(__name__)

LEAF = -1


@dataclass(frozen=True, eq=False)
class TreeExport:
    """
    Faithful description of one fitted tree.

    Node i is internal when feature[i] >= 0 with children left[i]/right[i];
    value[i] holds the class frequencies of the training samples that
    reached node i.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    parent: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = self.feature.shape[0]
        parent = np.full(n, -1, dtype=np.int64)
        for i in range(n):
            if self.feature[i] != LEAF:
                parent[self.left[i]] = i
                parent[self.right[i]] = i
        object.__setattr__(self, "parent", parent)

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] == LEAF

    @property
    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.feature == LEAF)

    @property
    def n_leaves(self) -> int:
        return int(np.count_nonzero(self.feature == LEAF))

    @property
    def n_internal(self) -> int:
        return self.n_nodes - self.n_leaves

    def leaf_class(self, node: int) -> int:
        return int(np.argmax(self.value[node]))

    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] != LEAF:
                depths[self.left[i]] = depths[i] + 1
                depths[self.right[i]] = depths[i] + 1
        return int(depths.max())

    def apply(self, Z: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row of Z."""
        Z = np.atleast_2d(Z)
        nodes = np.zeros(Z.shape[0], dtype=np.int64)
        rows = np.arange(Z.shape[0])
        active = self.feature[nodes] != LEAF
        while np.any(active):
            f = self.feature[nodes[active]]
            go_left = Z[rows[active], f] <= self.threshold[nodes[active]]
            nodes[active] = np.where(go_left, self.left[nodes[active]], self.right[nodes[active]])
            active = self.feature[nodes] != LEAF
        return nodes

    def replay(self, Z: np.ndarray) -> np.ndarray:
        """Predicted classes obtained by walking the exported nodes."""
        return np.argmax(self.value[self.apply(Z)], axis=1)

    def path(self, leaf: int) -> List[Tuple[int, bool]]:
        """(internal node, went_left) pairs from the root down to leaf."""
        steps = []
        node = leaf
        while self.parent[node] != -1:
            up = int(self.parent[node])
            steps.append((up, bool(self.left[up] == node)))
            node = up
        return steps[::-1]

    def ancestors(self, node: int) -> List[int]:
        """Node followed by its ancestors up to the root."""
        chain = [int(node)]
        while self.parent[chain[-1]] != -1:
            chain.append(int(self.parent[chain[-1]]))
        return chain

    def subtree_leaves(self, node: int) -> List[int]:
        """Leaves below node in preorder (ascending node index)."""
        out, stack = [], [int(node)]
        while stack:
            i = stack.pop()
            if self.feature[i] == LEAF:
                out.append(i)
            else:
                stack.append(int(self.right[i]))
                stack.append(int(self.left[i]))
        return out


def gini(y: np.ndarray, n_classes: int = NUM_STATES) -> float:
    if y.size == 0:
        return 0.0
    p = np.bincount(y, minlength=n_classes) / y.size
    return float(1.0 - np.sum(p * p))


def _best_split(Z: np.ndarray, y: np.ndarray, features: np.ndarray,
                min_leaf: int) -> Optional[Tuple[int, float]]:
    """
    Lowest weighted-Gini split over the candidate features.

    Ties keep the first candidate feature and the lowest threshold.
    """
    n = y.size
    onehot = np.eye(NUM_STATES)[y]
    parent_counts = onehot.sum(axis=0)
    parent_score = float(np.sum(parent_counts ** 2) / n)

    best_score = parent_score + 1e-12
    best = None
    for f in features:
        order = np.argsort(Z[:, f], kind="stable")
        values = Z[order, f]
        left_counts = np.cumsum(onehot[order], axis=0)[:-1]
        n_left = np.arange(1, n, dtype=np.float64)
        n_right = n - n_left
        right_counts = parent_counts - left_counts

        valid = (values[1:] > values[:-1]) & (n_left >= min_leaf) & (n_right >= min_leaf)
        if not np.any(valid):
            continue
        # n * weighted gini = n - score, so maximize score
        score = np.sum(left_counts ** 2, axis=1) / n_left + np.sum(right_counts ** 2, axis=1) / n_right
        score = np.where(valid, score, -np.inf)
        pos = int(np.argmax(score))
        if score[pos] > best_score:
            best_score = float(score[pos])
            threshold = 0.5 * (values[pos] + values[pos + 1])
            # midpoint can round up onto the right value for adjacent floats
            if threshold >= values[pos + 1]:
                threshold = values[pos]
            best = (int(f), float(threshold))
    return best


class _TreeBuilder:
    def __init__(self, max_depth: Optional[int], min_leaf: int, max_features: Optional[int],
                 rng: Optional[np.random.Generator]):
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.max_features = max_features
        self.rng = rng
        self.feature: List[int] = []
        self.threshold: List[float] = []
        self.left: List[int] = []
        self.right: List[int] = []
        self.value: List[np.ndarray] = []

    def _candidates(self, n_features: int) -> np.ndarray:
        if self.max_features is None or self.max_features >= n_features:
            return np.arange(n_features)
        return np.sort(self.rng.choice(n_features, size=self.max_features, replace=False))

    def build(self, Z: np.ndarray, y: np.ndarray) -> TreeExport:
        stack = [(np.arange(y.size), 0, -1, False)]
        while stack:
            idx, depth, parent, is_left = stack.pop()
            node = len(self.feature)
            counts = np.bincount(y[idx], minlength=NUM_STATES).astype(np.float64)
            self.feature.append(LEAF)
            self.threshold.append(0.0)
            self.left.append(LEAF)
            self.right.append(LEAF)
            self.value.append(counts / counts.sum())
            if parent != -1:
                if is_left:
                    self.left[parent] = node
                else:
                    self.right[parent] = node

            if np.count_nonzero(counts) <= 1:
                continue
            if self.max_depth is not None and depth >= self.max_depth:
                continue
            if idx.size < 2 * self.min_leaf:
                continue
            split = _best_split(Z[idx], y[idx], self._candidates(Z.shape[1]), self.min_leaf)
            if split is None:
                continue
            f, thr = split
            self.feature[node] = f
            self.threshold[node] = thr
            goes_left = Z[idx, f] <= thr
            # right pushed first so the left subtree gets the next preorder ids
            stack.append((idx[~goes_left], depth + 1, node, False))
            stack.append((idx[goes_left], depth + 1, node, True))

        return TreeExport(
            feature=np.array(self.feature, dtype=np.int64),
            threshold=np.array(self.threshold, dtype=np.float64),
            left=np.array(self.left, dtype=np.int64),
            right=np.array(self.right, dtype=np.int64),
            value=np.vstack(self.value),
        )


def fit_tree(Z: np.ndarray, y: np.ndarray, max_depth: Optional[int] = 12, min_leaf: int = 5,
             max_features: Optional[int] = None, rng: Optional[np.random.Generator] = None) -> TreeExport:
    """Grow one CART tree on normalized samples Z with labels y."""
    Z = np.asarray(Z, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if Z.shape[0] == 0:
        raise ConfigurationError("Cannot grow a tree on zero samples")
    check_labels(y)
    if max_features is not None and rng is None:
        raise ConfigurationError("Feature subsampling requires an RNG")
    return _TreeBuilder(max_depth, min_leaf, max_features, rng).build(Z, y)


def _export_params(tree: TreeExport, prefix: str = "") -> Dict[str, np.ndarray]:
    return {
        f"{prefix}feature": tree.feature,
        f"{prefix}threshold": tree.threshold,
        f"{prefix}left": tree.left,
        f"{prefix}right": tree.right,
        f"{prefix}value": tree.value,
    }


class DecisionTree(Classifier):
    algorithm = Algorithm.DECISION_TREE

    def __init__(self, config: TrainingConfig, scaler: Scaler, schema: FeatureSchema,
                 tree: TreeExport, train_accuracy: float = float("nan")):
        super().__init__(config, scaler, schema, train_accuracy)
        self._tree = tree

    @classmethod
    def fit(cls, config: TrainingConfig, Z: np.ndarray, y: np.ndarray, scaler: Scaler,
            schema: FeatureSchema) -> "DecisionTree":
        hp = config.hyperparameters
        tree = fit_tree(Z, y, max_depth=hp.max_depth, min_leaf=hp.min_leaf)
        model = cls(config, scaler, schema, tree)
        model.train_accuracy = accuracy_percent(model, Z, y)
        logger.debug("Tree: %d nodes, %d leaves, depth %d", tree.n_nodes, tree.n_leaves, tree.depth())
        return model

    def scores_normalized(self, Z: np.ndarray) -> np.ndarray:
        return self._tree.value[self._tree.apply(Z)]

    def tree_structure(self) -> TreeExport:
        return self._tree

    def parameters(self) -> Dict[str, np.ndarray]:
        return _export_params(self._tree)

    @classmethod
    def from_parameters(cls, config, scaler, schema, params, train_accuracy):
        tree = TreeExport(**{k: params[k] for k in ("feature", "threshold", "left", "right", "value")})
        return cls(config, scaler, schema, tree, train_accuracy)


class RandomForest(Classifier):
    """Bagged CART trees; class scores are the trees' vote proportions."""

    algorithm = Algorithm.RANDOM_FOREST

    def __init__(self, config: TrainingConfig, scaler: Scaler, schema: FeatureSchema,
                 trees: List[TreeExport], train_accuracy: float = float("nan")):
        super().__init__(config, scaler, schema, train_accuracy)
        self._trees = list(trees)
        # all trees concatenated so traversal runs over every tree at once
        offsets = np.cumsum([0] + [t.n_nodes for t in self._trees])
        self._roots = offsets[:-1]
        self._feature = np.concatenate([t.feature for t in self._trees])
        self._threshold = np.concatenate([t.threshold for t in self._trees])
        self._left = np.concatenate([np.where(t.left == LEAF, LEAF, t.left + o) for t, o in zip(self._trees, offsets)])
        self._right = np.concatenate([np.where(t.right == LEAF, LEAF, t.right + o) for t, o in zip(self._trees, offsets)])
        self._vote = np.concatenate([np.argmax(t.value, axis=1) for t in self._trees])

    @property
    def trees(self) -> List[TreeExport]:
        return list(self._trees)

    @classmethod
    def fit(cls, config: TrainingConfig, Z: np.ndarray, y: np.ndarray, scaler: Scaler,
            schema: FeatureSchema) -> "RandomForest":
        hp = config.hyperparameters
        streams = np.random.SeedSequence(config.seed).spawn(hp.n_trees)
        trees = []
        for stream in streams:
            rng = np.random.default_rng(stream)
            if hp.bootstrap:
                idx = rng.integers(0, y.size, size=y.size)
            else:
                idx = np.arange(y.size)
            trees.append(fit_tree(Z[idx], y[idx], max_depth=hp.max_depth, min_leaf=hp.min_leaf,
                                  max_features=hp.max_features, rng=rng))
        model = cls(config, scaler, schema, trees)
        model.train_accuracy = accuracy_percent(model, Z, y)
        return model

    def scores_normalized(self, Z: np.ndarray) -> np.ndarray:
        Z = np.atleast_2d(Z)
        n, t = Z.shape[0], len(self._trees)
        nodes = np.broadcast_to(self._roots, (n, t)).copy()
        rows = np.broadcast_to(np.arange(n)[:, None], (n, t))
        active = self._feature[nodes] != LEAF
        while np.any(active):
            cur = nodes[active]
            go_left = Z[rows[active], self._feature[cur]] <= self._threshold[cur]
            nodes[active] = np.where(go_left, self._left[cur], self._right[cur])
            active = self._feature[nodes] != LEAF
        votes = self._vote[nodes]
        counts = np.zeros((n, NUM_STATES))
        np.add.at(counts, (np.repeat(np.arange(n), t), votes.ravel()), 1.0)
        return counts / t

    def parameters(self) -> Dict[str, np.ndarray]:
        params = {"n_trees": np.array([len(self._trees)], dtype=np.int64)}
        for i, tree in enumerate(self._trees):
            params.update(_export_params(tree, prefix=f"tree{i:03d}."))
        return params

    @classmethod
    def from_parameters(cls, config, scaler, schema, params, train_accuracy):
        n_trees = int(params["n_trees"][0])
        trees = []
        for i in range(n_trees):
            p = f"tree{i:03d}."
            trees.append(TreeExport(**{k: params[p + k] for k in ("feature", "threshold", "left", "right", "value")}))
        return cls(config, scaler, schema, trees, train_accuracy)
