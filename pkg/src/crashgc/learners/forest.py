"""Bagged random forest of Gini trees."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from ..errors import EmptyDatasetError
from ..ingest import CrashDataset
from .config import ForestParams, TreeParams
from .tree import DecisionTreeModel, _as_features, _grow


def tree_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for tree ``index``; the same for serial and parallel training."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


@dataclass
class RandomForestModel:
    trees: list[DecisionTreeModel]
    params: ForestParams = field(default_factory=ForestParams)
    features_per_split: int = 1
    seed: int = 0
    feature_names: tuple[str, ...] = ()

    kind = "rf"

    @property
    def n_estimators(self) -> int:
        return len(self.trees)

    def predict_proba(self, X) -> np.ndarray:
        single = np.ndim(X) == 1
        X = _as_features(np.atleast_2d(X))
        total = np.zeros((X.shape[0], 3))
        for tree in self.trees:
            total += tree.predict_proba(X)
        proba = total / len(self.trees)
        return proba[0] if single else proba

    def predict(self, X) -> np.ndarray:
        return np.argmax(np.atleast_2d(self.predict_proba(X)), axis=1)


def _fit_one(X, y, index, seed, params: ForestParams, n_try, names) -> DecisionTreeModel:
    rng = tree_rng(seed, index)
    n, d = X.shape
    rows = rng.integers(0, n, n) if params.bootstrap else np.arange(n)
    # one row of uniforms per potential node; node k tries its n_try smallest
    noise = rng.random((2 * n + 1, d)) if n_try < d else np.empty((1, d))
    tree_params = TreeParams(params.max_depth, params.min_samples_split)
    return _grow(X, y, rows, tree_params, n_try, noise, names)


def train_random_forest(train: CrashDataset, params: ForestParams = ForestParams(), seed: int = 0) -> RandomForestModel:
    if train.n < 2:
        raise EmptyDatasetError("a forest needs at least two training rows")
    X = _as_features(train.X)
    y = np.asarray(train.y, dtype=np.int64)
    d = X.shape[1]
    n_try = params.features_per_split or max(1, int(math.isqrt(d)))
    n_try = min(n_try, d)
    names = tuple(train.schema.names)
    jobs = (delayed(_fit_one)(X, y, i, seed, params, n_try, names) for i in range(params.n_estimators))
    if params.n_jobs == 1:
        trees = [job[0](*job[1], **job[2]) for job in jobs]
    else:
        # kernels release the GIL, so threads parallelise without copying X
        trees = Parallel(n_jobs=params.n_jobs, prefer="threads")(jobs)
    return RandomForestModel(list(trees), params, n_try, seed, names)
