"""
Softmax regression and a fully connected network with analytic input gradients.

Both models expose logits, the cross-entropy gradient with respect to the
normalized input, and the logit Jacobian, which is what the gradient
attacks consume.
"""

import logging
from typing import Dict, List, Tuple

import numpy as np

from .dataset import Scaler
from .errors import ConfigurationError, TrainingError
from .models import Algorithm, Classifier, TrainingConfig, accuracy_percent, check_labels, softmax
from .schema import NUM_STATES, FeatureSchema

logger = logging.getLogger(__name__)


def cross_entropy(probs: np.ndarray, y: np.ndarray) -> float:
    picked = probs[np.arange(y.size), y]
    return float(-np.mean(np.log(np.clip(picked, 1e-300, None))))


def _onehot(y: np.ndarray) -> np.ndarray:
    return np.eye(NUM_STATES)[y]


class _GradientModel(Classifier):
    @property
    def supports_gradient(self) -> bool:
        return True

    def scores_normalized(self, Z: np.ndarray) -> np.ndarray:
        return softmax(self.logits_normalized(Z))


class LogisticRegression(_GradientModel):
    """Multinomial softmax regression: logits = z W + b."""

    algorithm = Algorithm.LOGISTIC_REGRESSION

    def __init__(self, config: TrainingConfig, scaler: Scaler, schema: FeatureSchema,
                 weights: np.ndarray, bias: np.ndarray, train_accuracy: float = float("nan")):
        super().__init__(config, scaler, schema, train_accuracy)
        weights = np.asarray(weights, dtype=np.float64)
        bias = np.asarray(bias, dtype=np.float64)
        if weights.shape[0] != len(schema) or bias.shape != (weights.shape[1],):
            raise ConfigurationError(f"Weight shape {weights.shape} / bias {bias.shape} do not fit the schema")
        self.weights = weights
        self.bias = bias
        self.weights.setflags(write=False)
        self.bias.setflags(write=False)

    @classmethod
    def fit(cls, config: TrainingConfig, Z: np.ndarray, y: np.ndarray, scaler: Scaler,
            schema: FeatureSchema) -> "LogisticRegression":
        hp = config.hyperparameters
        check_labels(y)
        n, d = Z.shape
        W = np.zeros((d, NUM_STATES))
        b = np.zeros(NUM_STATES)
        Y = _onehot(y)

        for epoch in range(hp.epochs):
            P = softmax(Z @ W + b)
            loss = cross_entropy(P, y) + 0.5 * hp.l2 * float(np.sum(W * W))
            if not np.isfinite(loss):
                raise TrainingError(f"Logistic regression loss became non-finite at epoch {epoch}")
            residual = (P - Y) / n
            W -= hp.learning_rate * (Z.T @ residual + hp.l2 * W)
            b -= hp.learning_rate * residual.sum(axis=0)
            if epoch % 200 == 0:
                logger.debug("LR epoch %d loss %.5f", epoch, loss)

        model = cls(config, scaler, schema, W, b)
        model.train_accuracy = accuracy_percent(model, Z, y)
        return model

    def logits_normalized(self, Z: np.ndarray) -> np.ndarray:
        return np.atleast_2d(Z) @ self.weights + self.bias

    def loss_gradient_normalized(self, Z: np.ndarray, y: np.ndarray) -> np.ndarray:
        # d CE / dz = W (p - e_y)
        P = self.scores_normalized(Z)
        return (P - _onehot(y)) @ self.weights.T

    def logit_jacobian_normalized(self, z: np.ndarray) -> np.ndarray:
        return np.array(self.weights.T)

    def parameters(self) -> Dict[str, np.ndarray]:
        return {"weights": self.weights, "bias": self.bias}

    @classmethod
    def from_parameters(cls, config, scaler, schema, params, train_accuracy):
        return cls(config, scaler, schema, params["weights"], params["bias"], train_accuracy)


def _relu(a: np.ndarray) -> np.ndarray:
    return np.maximum(a, 0.0)


def _relu_grad(a: np.ndarray) -> np.ndarray:
    return (a > 0).astype(np.float64)


def _tanh_grad(a: np.ndarray) -> np.ndarray:
    return 1.0 - np.tanh(a) ** 2


# module-level functions keep classifiers picklable for the worker pool
_ACTIVATIONS = {
    "relu": (_relu, _relu_grad),
    "tanh": (np.tanh, _tanh_grad),
}


class NeuralNet(_GradientModel):
    """Fully connected hidden layers with a softmax output of width 11."""

    algorithm = Algorithm.NEURAL_NET

    def __init__(self, config: TrainingConfig, scaler: Scaler, schema: FeatureSchema,
                 layers: List[Tuple[np.ndarray, np.ndarray]], train_accuracy: float = float("nan")):
        super().__init__(config, scaler, schema, train_accuracy)
        if not layers or layers[-1][0].shape[1] != NUM_STATES:
            raise ConfigurationError(f"Network output width must be {NUM_STATES}")
        if layers[0][0].shape[0] != len(schema):
            raise ConfigurationError(f"Network input width must be {len(schema)}")
        self.layers = [(np.asarray(W, dtype=np.float64), np.asarray(b, dtype=np.float64)) for W, b in layers]
        for W, b in self.layers:
            W.setflags(write=False)
            b.setflags(write=False)
        self._act, self._act_grad = _ACTIVATIONS[config.hyperparameters.activation]

    @staticmethod
    def init_layers(sizes: List[int], rng: np.random.Generator) -> List[Tuple[np.ndarray, np.ndarray]]:
        """Xavier-uniform weights, zero biases."""
        layers = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            layers.append((rng.uniform(-limit, limit, size=(fan_in, fan_out)), np.zeros(fan_out)))
        return layers

    def _forward(self, Z: np.ndarray):
        """Pre-activations of every hidden layer and the output logits."""
        pre = []
        h = np.atleast_2d(Z)
        for W, b in self.layers[:-1]:
            a = h @ W + b
            pre.append(a)
            h = self._act(a)
        W, b = self.layers[-1]
        return pre, h @ W + b

    def _backward(self, Z: np.ndarray, pre: List[np.ndarray], delta: np.ndarray):
        """Parameter gradients and input gradient for output-logit gradient delta."""
        grads = []
        inputs = [np.atleast_2d(Z)] + [self._act(a) for a in pre]
        for k in range(len(self.layers) - 1, -1, -1):
            W, _ = self.layers[k]
            grads.append((inputs[k].T @ delta, delta.sum(axis=0)))
            delta = delta @ W.T
            if k > 0:
                delta = delta * self._act_grad(pre[k - 1])
        return grads[::-1], delta

    @classmethod
    def fit(cls, config: TrainingConfig, Z: np.ndarray, y: np.ndarray, scaler: Scaler,
            schema: FeatureSchema) -> "NeuralNet":
        hp = config.hyperparameters
        check_labels(y)
        rng = np.random.default_rng(config.seed)
        sizes = [Z.shape[1], *hp.layer_sizes, NUM_STATES]
        model = cls(config, scaler, schema, cls.init_layers(sizes, rng))
        layers = [(np.array(W), np.array(b)) for W, b in model.layers]
        model.layers = layers
        Y = _onehot(y)
        n = y.size

        for epoch in range(hp.epochs):
            order = rng.permutation(n)
            epoch_loss = 0.0
            for start in range(0, n, hp.batch_size):
                batch = order[start:start + hp.batch_size]
                pre, logits = model._forward(Z[batch])
                P = softmax(logits)
                epoch_loss += cross_entropy(P, y[batch]) * batch.size
                grads, _ = model._backward(Z[batch], pre, (P - Y[batch]) / batch.size)
                for (W, b), (gW, gb) in zip(layers, grads):
                    W -= hp.learning_rate * gW
                    b -= hp.learning_rate * gb
            epoch_loss /= n
            if not np.isfinite(epoch_loss):
                raise TrainingError(f"Neural net loss became non-finite at epoch {epoch}")
            if epoch % 20 == 0:
                logger.debug("NN epoch %d loss %.5f", epoch, epoch_loss)

        for W, b in layers:
            W.setflags(write=False)
            b.setflags(write=False)
        model.train_accuracy = accuracy_percent(model, Z, y)
        return model

    def logits_normalized(self, Z: np.ndarray) -> np.ndarray:
        return self._forward(Z)[1]

    def loss_gradient_normalized(self, Z: np.ndarray, y: np.ndarray) -> np.ndarray:
        pre, logits = self._forward(Z)
        _, dz = self._backward(Z, pre, softmax(logits) - _onehot(y))
        return dz

    def logit_jacobian_normalized(self, z: np.ndarray) -> np.ndarray:
        pre, _ = self._forward(z)
        M = np.eye(z.shape[-1])
        for k, (W, _) in enumerate(self.layers[:-1]):
            M = (M @ W) * self._act_grad(pre[k][0])
        M = M @ self.layers[-1][0]
        return M.T

    def parameters(self) -> Dict[str, np.ndarray]:
        params = {}
        for i, (W, b) in enumerate(self.layers):
            params[f"layer{i}.weights"] = W
            params[f"layer{i}.bias"] = b
        return params

    @classmethod
    def from_parameters(cls, config, scaler, schema, params, train_accuracy):
        count = len(config.hyperparameters.layer_sizes) + 1
        layers = [(params[f"layer{i}.weights"], params[f"layer{i}.bias"]) for i in range(count)]
        return cls(config, scaler, schema, layers, train_accuracy)
