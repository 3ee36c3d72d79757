"""Model files: a versioned ``.npz`` archive with a JSON header.

Arrays are stored verbatim (no pickling), so a save/load round trip reproduces
predictions bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import asdict

import numpy as np

from .boost import BoostModel, RegressionTree
from .config import BoostParams, ForestParams, MlpParams, TreeParams
from .forest import RandomForestModel
from .mlp import MlpModel
from .tree import DecisionTreeModel

FORMAT = "crashgc-model"
VERSION = 1

_TREE_FIELDS = ("feature", "threshold", "left", "right")


def _stack_trees(trees, last: str) -> dict[str, np.ndarray]:
    sizes = np.array([t.feature.shape[0] for t in trees], np.int64)
    out = {"tree_sizes": sizes}
    for name in _TREE_FIELDS + (last,):
        out[name] = np.concatenate([getattr(t, name) for t in trees])
    return out


def _split_trees(arrays, last: str):
    sizes = arrays["tree_sizes"]
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    for a, b in zip(bounds[:-1], bounds[1:]):
        yield {name: arrays[name][a:b] for name in _TREE_FIELDS + (last,)}


def save_model(model, path) -> None:
    if not isinstance(model, (DecisionTreeModel, RandomForestModel, BoostModel, MlpModel)):
        raise TypeError(f"cannot serialise {type(model).__name__}")
    meta = {"format": FORMAT, "version": VERSION, "kind": model.kind,
            "feature_names": list(model.feature_names), "params": asdict(model.params)}
    if isinstance(model, DecisionTreeModel):
        arrays = _stack_trees([model], "counts")
    elif isinstance(model, RandomForestModel):
        arrays = _stack_trees(model.trees, "counts")
        meta.update(features_per_split=model.features_per_split, seed=model.seed)
    elif isinstance(model, BoostModel):
        flat = [t for trees in model.rounds for t in trees]
        arrays = _stack_trees(flat, "value") if flat else {}
        meta.update(n_rounds=len(model.rounds), train_loss=model.train_loss)
    else:
        arrays = {"mean": model.mean, "scale": model.scale}
        for i, (w, b) in enumerate(zip(model.weights, model.biases)):
            arrays[f"W{i}"] = w
            arrays[f"b{i}"] = b
        meta.update(n_layers=len(model.weights), loss_history=model.loss_history)
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta, sort_keys=True)), **arrays)


def load_model(path):
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        arrays = {k: data[k] for k in data.files if k != "meta"}
    if meta.get("format") != FORMAT:
        raise ValueError(f"{path}: not a {FORMAT} file")
    if meta.get("version") != VERSION:
        raise ValueError(f"{path}: unsupported model version {meta.get('version')}")
    kind = meta["kind"]
    names = tuple(meta["feature_names"])
    if kind in ("dt", "rf"):
        trees = [DecisionTreeModel(t["feature"], t["threshold"], t["left"], t["right"], t["counts"])
                 for t in _split_trees(arrays, "counts")]
        if kind == "dt":
            tree = trees[0]
            tree.params = TreeParams(**meta["params"])
            tree.feature_names = names
            return tree
        params = ForestParams(**meta["params"])
        for t in trees:
            t.params = TreeParams(params.max_depth, params.min_samples_split)
            t.feature_names = names
        return RandomForestModel(trees, params, meta["features_per_split"], meta["seed"], names)
    if kind == "xgb":
        flat = [RegressionTree(t["feature"], t["threshold"], t["left"], t["right"], t["value"])
                for t in _split_trees(arrays, "value")] if arrays else []
        rounds = [flat[i : i + 3] for i in range(0, len(flat), 3)]
        return BoostModel(rounds, BoostParams(**meta["params"]), names, meta["train_loss"])
    if kind == "dnn":
        n = meta["n_layers"]
        params = dict(meta["params"])
        params["hidden_layers"] = tuple(params["hidden_layers"])
        return MlpModel(
            [arrays[f"W{i}"] for i in range(n)], [arrays[f"b{i}"] for i in range(n)],
            arrays["mean"], arrays["scale"], MlpParams(**params), names, meta["loss_history"],
        )
    raise ValueError(f"{path}: unknown model kind {kind!r}")
