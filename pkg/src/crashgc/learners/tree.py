"""CART classification tree with Gini impurity."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from ..errors import EmptyDatasetError
from ..ingest import N_CLASSES, CrashDataset
from . import _kernels
from .config import TreeParams


@dataclass(frozen=True)
class LeafNode:
    class_counts: tuple[int, ...]


@dataclass(frozen=True)
class SplitNode:
    feature: int
    threshold: float
    left: "TreeNode"
    right: "TreeNode"


TreeNode = Union[LeafNode, SplitNode]


@dataclass(frozen=True)
class SplitResult:
    feature: int
    threshold: float
    gain: float


def _as_features(X) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(X, dtype=np.float64))


def best_split(X, y, candidate_features: Optional[Sequence[int]] = None) -> Optional[SplitResult]:
    """Exhaustive Gini split search over midpoints of consecutive distinct values.

    Returns ``None`` when no split strictly decreases impurity. Among equal
    gains (up to floating round-off) the lowest feature index, then the lowest
    threshold, wins.
    """
    X = _as_features(X)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("X must be 2-D with one row per label")
    if y.shape[0] < 2:
        return None
    cand = np.arange(X.shape[1]) if candidate_features is None else np.unique(np.asarray(candidate_features, np.int64))
    f, t, gain = _kernels.gini_best_split(X, y, np.arange(y.shape[0]), cand, N_CLASSES)
    if f < 0:
        return None
    return SplitResult(int(f), float(t), float(gain))


@dataclass
class DecisionTreeModel:
    """Flat-array tree; node 0 is the root and ``feature == -1`` marks leaves."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray
    params: TreeParams = field(default_factory=TreeParams)
    feature_names: tuple[str, ...] = ()

    kind = "dt"

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, np.int64)
        for node in range(self.n_nodes):  # children always have larger ids
            if self.feature[node] >= 0:
                depth[self.left[node]] = depth[self.right[node]] = depth[node] + 1
        return int(depth.max())

    @property
    def root(self) -> TreeNode:
        built: dict[int, TreeNode] = {}
        for node in range(self.n_nodes - 1, -1, -1):
            if self.feature[node] < 0:
                built[node] = LeafNode(tuple(int(c) for c in self.counts[node]))
            else:
                built[node] = SplitNode(
                    int(self.feature[node]), float(self.threshold[node]),
                    built.pop(int(self.left[node])), built.pop(int(self.right[node])),
                )
        return built[0]

    def apply(self, X) -> np.ndarray:
        X = _as_features(np.atleast_2d(X))
        return _kernels.apply_tree(X, self.feature, self.threshold, self.left, self.right)

    def predict_proba(self, X) -> np.ndarray:
        single = np.ndim(X) == 1
        leaf_counts = self.counts[self.apply(X)].astype(np.float64)
        proba = leaf_counts / leaf_counts.sum(axis=1, keepdims=True)
        return proba[0] if single else proba

    def predict(self, X) -> np.ndarray:
        return np.argmax(np.atleast_2d(self.predict_proba(X)), axis=1)


def _grow(X, y, rows, params: TreeParams, n_try: int, node_noise: np.ndarray, names) -> DecisionTreeModel:
    max_depth = -1 if params.max_depth is None else params.max_depth
    feature, threshold, left, right, counts = _kernels.grow_classifier(
        X, y, rows, N_CLASSES, max_depth, params.min_samples_split, n_try, node_noise
    )
    return DecisionTreeModel(feature, threshold, left, right, counts, params, tuple(names))


def fit_tree_arrays(X, y, params: TreeParams = TreeParams(), feature_names=()) -> DecisionTreeModel:
    X = _as_features(X)
    y = np.asarray(y, dtype=np.int64)
    if y.shape[0] == 0:
        raise EmptyDatasetError("cannot train a tree on zero rows")
    rows = np.arange(y.shape[0])
    return _grow(X, y, rows, params, X.shape[1], np.empty((1, X.shape[1])), feature_names)


def train_decision_tree(train: CrashDataset, params: TreeParams = TreeParams()) -> DecisionTreeModel:
    """Greedy recursive CART growth; leaves store class counts."""
    if train.n == 0:
        raise EmptyDatasetError("cannot train a tree on an empty dataset")
    return fit_tree_arrays(train.X, train.y, params, train.schema.names)


def tree_predict_proba(model: DecisionTreeModel, x) -> np.ndarray:
    return model.predict_proba(x)
