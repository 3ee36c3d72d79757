"""Decision tree, random forest, Newton-boosted trees and a feed-forward network."""

from __future__ import annotations

import numpy as np

from ..ingest import CrashDataset
from .boost import BoostModel, boost_predict_proba, train_gradient_boost
from .config import (
    KINDS,
    BoostParams,
    ForestParams,
    MlpParams,
    TrainConfig,
    TreeParams,
    params_from_mapping,
)
from .forest import RandomForestModel, train_random_forest
from .mlp import MlpModel, mlp_forward, mlp_train
from .serialize import load_model, save_model
from .tree import (
    DecisionTreeModel,
    LeafNode,
    SplitNode,
    best_split,
    train_decision_tree,
    tree_predict_proba,
)


def train(ds: CrashDataset, config: TrainConfig):
    """Train the learner named by ``config.kind`` on ``ds``."""
    if config.kind == "dt":
        return train_decision_tree(ds, config.params)
    if config.kind == "rf":
        return train_random_forest(ds, config.params, config.seed)
    if config.kind == "xgb":
        return train_gradient_boost(ds, config.params)
    return mlp_train(ds, config.params, config.seed)


def predict_proba(model, ds: CrashDataset) -> np.ndarray:
    """Class probabilities for ``ds``, selecting the model's features by name."""
    cols = [ds.schema.index(name) for name in model.feature_names]
    return model.predict_proba(ds.X[:, cols])


def predict(model, ds: CrashDataset) -> np.ndarray:
    return np.argmax(predict_proba(model, ds), axis=1)


__all__ = [
    "KINDS", "BoostModel", "BoostParams", "DecisionTreeModel", "ForestParams", "LeafNode",
    "MlpModel", "MlpParams", "RandomForestModel", "SplitNode", "TrainConfig", "TreeParams",
    "best_split", "boost_predict_proba", "load_model", "mlp_forward", "mlp_train",
    "params_from_mapping", "predict", "predict_proba", "save_model", "train",
    "train_decision_tree", "train_gradient_boost", "train_random_forest", "tree_predict_proba",
]
