"""Fully connected ReLU network with a softmax output, trained by Adam."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import DivergenceError, EmptyDatasetError
from ..ingest import N_CLASSES, CrashDataset
from .config import MlpParams

logger = logging.getLogger(__name__)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class MlpModel:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    mean: np.ndarray
    scale: np.ndarray
    params: MlpParams = field(default_factory=MlpParams)
    feature_names: tuple[str, ...] = ()
    loss_history: list[float] = field(default_factory=list)

    kind = "dnn"

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def predict_proba(self, X) -> np.ndarray:
        single = np.ndim(X) == 1
        proba = mlp_forward(self, np.atleast_2d(X))
        return proba[0] if single else proba

    def predict(self, X) -> np.ndarray:
        return np.argmax(np.atleast_2d(self.predict_proba(X)), axis=1)


def init_network(sizes, rng: np.random.Generator):
    """He-style uniform init: U(-sqrt(6/fan_in), sqrt(6/fan_in)), zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = math.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def _forward(weights, biases, Z):
    acts = [Z]
    h = Z
    for W, b in zip(weights[:-1], biases[:-1]):
        h = np.maximum(h @ W + b, 0.0)
        acts.append(h)
    logits = h @ weights[-1] + biases[-1]
    return acts, logits


def mlp_forward(model: MlpModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.weights[0].shape[0]:
        raise ValueError(f"expected {model.weights[0].shape[0]} input columns, got shape {X.shape}")
    _, logits = _forward(model.weights, model.biases, (X - model.mean) / model.scale)
    return softmax(logits)


def loss_and_grads(weights, biases, Z, y):
    """Mean cross-entropy on standardized inputs ``Z`` and its gradients by backprop."""
    acts, logits = _forward(weights, biases, Z)
    proba = softmax(logits)
    m = Z.shape[0]
    picked = proba[np.arange(m), y]
    loss = float(-np.mean(np.log(np.maximum(picked, 1e-300))))
    delta = proba.copy()
    delta[np.arange(m), y] -= 1.0
    delta /= m
    gw = [None] * len(weights)
    gb = [None] * len(biases)
    for layer in range(len(weights) - 1, -1, -1):
        gw[layer] = acts[layer].T @ delta
        gb[layer] = delta.sum(axis=0)
        if layer:
            delta = (delta @ weights[layer].T) * (acts[layer] > 0)
    return loss, gw, gb


def fit_mlp_arrays(X, y, params: MlpParams = MlpParams(), seed: int = 0, feature_names=()) -> MlpModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n, d = X.shape
    if n == 0:
        raise EmptyDatasetError("cannot train a network on zero rows")
    rng = np.random.default_rng(seed)
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    Z = (X - mean) / scale
    sizes = [d, *params.hidden_layers, N_CLASSES]
    weights, biases = init_network(sizes, rng)
    params_list = weights + biases
    m1 = [np.zeros_like(p) for p in params_list]
    m2 = [np.zeros_like(p) for p in params_list]
    b1, b2, lr, eps = params.beta1, params.beta2, params.learning_rate, params.epsilon
    step = 0
    history = []
    for epoch in range(1, params.epochs + 1):
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, params.batch_size):
            batch = perm[start : start + params.batch_size]
            loss, gw, gb = loss_and_grads(weights, biases, Z[batch], y[batch])
            if not math.isfinite(loss):
                raise DivergenceError(epoch, lr, loss)
            total += loss * batch.shape[0]
            step += 1
            corr1 = 1.0 - b1**step
            corr2 = 1.0 - b2**step
            for p, g, s1, s2 in zip(params_list, gw + gb, m1, m2):
                s1 *= b1
                s1 += (1.0 - b1) * g
                s2 *= b2
                s2 += (1.0 - b2) * g * g
                p -= lr * (s1 / corr1) / (np.sqrt(s2 / corr2) + eps)
        history.append(total / n)
        if not math.isfinite(history[-1]):
            raise DivergenceError(epoch, lr, history[-1])
        logger.debug("epoch %d loss %.5f", epoch, history[-1])
    return MlpModel(weights, biases, mean, scale, params, tuple(feature_names), history)


def mlp_train(train: CrashDataset, params: MlpParams = MlpParams(), seed: int = 0) -> MlpModel:
    """Mini-batch Adam on mean softmax cross-entropy; batches reshuffled every epoch."""
    return fit_mlp_arrays(train.X, train.y, params, seed, train.schema.names)
