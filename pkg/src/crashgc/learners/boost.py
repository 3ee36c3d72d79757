"""Multiclass Newton boosting of regression trees on the softmax cross-entropy."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import EmptyDatasetError
from ..ingest import N_CLASSES, CrashDataset
from . import _kernels
from .config import BoostParams
from .tree import _as_features


@dataclass
class RegressionTree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X) -> np.ndarray:
        leaves = _kernels.apply_tree(X, self.feature, self.threshold, self.left, self.right)
        return self.value[leaves]


def softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_loss(proba: np.ndarray, y: np.ndarray) -> float:
    p = proba[np.arange(y.shape[0]), y]
    return float(-np.mean(np.log(np.maximum(p, 1e-300))))


@dataclass
class BoostModel:
    """``rounds[i][c]`` is the class-c tree of round i."""

    rounds: list[list[RegressionTree]]
    params: BoostParams = field(default_factory=BoostParams)
    feature_names: tuple[str, ...] = ()
    train_loss: list[float] = field(default_factory=list)

    kind = "xgb"

    @property
    def eta(self) -> float:
        return self.params.eta

    @property
    def base_score(self) -> float:
        return self.params.base_score

    def decision_function(self, X) -> np.ndarray:
        X = _as_features(np.atleast_2d(X))
        scores = np.full((X.shape[0], N_CLASSES), self.params.base_score)
        for trees in self.rounds:
            for c, tree in enumerate(trees):
                scores[:, c] += self.params.eta * tree.predict(X)
        return scores

    def predict_proba(self, X) -> np.ndarray:
        single = np.ndim(X) == 1
        proba = softmax(self.decision_function(X))
        return proba[0] if single else proba

    def predict(self, X) -> np.ndarray:
        return np.argmax(np.atleast_2d(self.predict_proba(X)), axis=1)


def fit_boost_arrays(X, y, params: BoostParams = BoostParams(), feature_names=()) -> BoostModel:
    X = _as_features(X)
    y = np.asarray(y, dtype=np.int64)
    n = y.shape[0]
    if n < 2:
        raise EmptyDatasetError("boosting needs at least two training rows")
    onehot = np.eye(N_CLASSES)[y]
    scores = np.full((n, N_CLASSES), params.base_score)
    presorted = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)
    proba = softmax(scores)
    losses = [log_loss(proba, y)]
    rounds = []
    for _ in range(params.rounds):
        grad = proba - onehot
        hess = proba * (1.0 - proba)
        trees = []
        for c in range(N_CLASSES):
            tree = RegressionTree(*_kernels.grow_regressor(
                X, np.ascontiguousarray(grad[:, c]), np.ascontiguousarray(hess[:, c]), presorted,
                params.max_depth, params.reg_lambda, params.gamma, params.min_child_hessian,
            ))
            trees.append(tree)
        for c, tree in enumerate(trees):
            scores[:, c] += params.eta * tree.predict(X)
        rounds.append(trees)
        proba = softmax(scores)
        losses.append(log_loss(proba, y))
    return BoostModel(rounds, params, tuple(feature_names), losses)


def train_gradient_boost(train: CrashDataset, params: BoostParams = BoostParams()) -> BoostModel:
    """Each round fits one tree per class to the current softmax gradients and hessians."""
    return fit_boost_arrays(train.X, train.y, params, train.schema.names)


def boost_predict_proba(model: BoostModel, x) -> np.ndarray:
    return model.predict_proba(x)
