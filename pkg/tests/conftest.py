"""Shared fixtures: a small generated cohort and one trained victim per algorithm."""

import numpy as np
import pytest

from shs_bench.datagen import GeneratorSpec, SplitSpec, generate, split
from shs_bench.dataset import Scaler
from shs_bench.gradient_classifiers import LogisticRegression
from shs_bench.models import (
    Algorithm,
    ForestParams,
    LogisticParams,
    NeuralNetParams,
    TrainingConfig,
    train,
)
from shs_bench.schema import NUM_STATES, default_schema

COHORT_SEED = 7
SMALL_PER_CLASS = 60


@pytest.fixture(scope="session")
def schema():
    return default_schema()


@pytest.fixture(scope="session")
def cohort():
    return generate(GeneratorSpec.default(per_class=SMALL_PER_CLASS, seed=COHORT_SEED))


@pytest.fixture(scope="session")
def train_test(cohort):
    return split(cohort, SplitSpec(0.7, seed=COHORT_SEED))


@pytest.fixture(scope="session")
def train_ds(train_test):
    return train_test[0]


@pytest.fixture(scope="session")
def test_ds(train_test):
    return train_test[1]


FAST_HYPERPARAMETERS = {
    Algorithm.DECISION_TREE: None,
    Algorithm.RANDOM_FOREST: ForestParams(n_trees=10),
    Algorithm.LOGISTIC_REGRESSION: LogisticParams(epochs=300),
    Algorithm.NEURAL_NET: NeuralNetParams(learning_rate=0.1, epochs=60),
}


@pytest.fixture(scope="session")
def victims(train_ds):
    """Trained dt, rf, lr and nn keyed by algorithm value."""
    return {
        algo.value: train(TrainingConfig(algo, 42, hp), train_ds)
        for algo, hp in FAST_HYPERPARAMETERS.items()
    }


def two_class_logistic(direction: np.ndarray, offset: float) -> LogisticRegression:
    """
    Softmax regression where only classes 0 and 1 can win.

    The class-0 minus class-1 logit is direction . z + offset; the other nine
    classes sit at a bias far below both.
    """
    schema = default_schema()
    weights = np.zeros((len(schema), NUM_STATES))
    weights[:, 0] = direction
    bias = np.full(NUM_STATES, -100.0)
    bias[0] = offset
    bias[1] = 0.0
    config = TrainingConfig(Algorithm.LOGISTIC_REGRESSION, 0)
    return LogisticRegression(config, Scaler.identity(len(schema)), schema, weights, bias)


@pytest.fixture
def two_class_victim():
    return two_class_logistic
