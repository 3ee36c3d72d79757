"""Confusion matrices, per-class metrics and reduced-vs-full comparisons."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .causality import GcRanking, select_top_k
from .ingest import CLASS_LABELS, N_CLASSES, CrashDataset, SplitPair, require_lineage
from .learners import TrainConfig, predict, train


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are true classes, columns predictions, both in PDO, BC, KA order."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (N_CLASSES, N_CLASSES) or (counts < 0).any():
            raise ValueError("confusion counts must be a non-negative 3x3 matrix")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def empty_rows(self) -> tuple[bool, ...]:
        return tuple(bool(s == 0) for s in self.counts.sum(axis=1))


def confusion(true, pred) -> ConfusionMatrix:
    true = np.asarray(true, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if true.shape != pred.shape:
        raise ValueError(f"length mismatch: {true.shape[0]} true labels vs {pred.shape[0]} predictions")
    if true.size == 0:
        raise ValueError("nothing to evaluate")
    for v in (true, pred):
        if v.min() < 0 or v.max() >= N_CLASSES:
            raise ValueError("labels must be class codes 0, 1, 2")
    codes = true * N_CLASSES + pred
    return ConfusionMatrix(np.bincount(codes, minlength=N_CLASSES * N_CLASSES).reshape(N_CLASSES, N_CLASSES))


def normalize_rows(cm: ConfusionMatrix) -> np.ndarray:
    """Row-normalised matrix (diagonal = per-class recall); empty rows stay zero."""
    counts = cm.counts.astype(np.float64)
    sums = counts.sum(axis=1, keepdims=True)
    return np.divide(counts, sums, out=np.zeros_like(counts), where=sums > 0)


def _ratio(num, den, flag, flags):
    if den == 0:
        flags.append(flag)
        return 0.0
    return num / den


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    recall: tuple[float, float, float]
    precision: tuple[float, float, float]
    f1: tuple[float, float, float]
    macro_f1: float
    flags: tuple[str, ...] = ()


def metrics(cm: ConfusionMatrix) -> MetricsReport:
    """Accuracy and per-class recall/precision/F1; zero denominators give 0 and a flag."""
    c = cm.counts
    total = c.sum()
    if total == 0:
        raise ValueError("confusion matrix is empty")
    flags: list[str] = []
    rows, cols = c.sum(axis=1), c.sum(axis=0)
    recall, precision, f1 = [], [], []
    for k, label in enumerate(CLASS_LABELS):
        r = _ratio(c[k, k], rows[k], f"recall[{label}]:no-true-rows", flags)
        p = _ratio(c[k, k], cols[k], f"precision[{label}]:no-predictions", flags)
        f = _ratio(2 * p * r, p + r, f"f1[{label}]:zero", flags)
        recall.append(float(r))
        precision.append(float(p))
        f1.append(float(f))
    return MetricsReport(
        float(np.trace(c) / total), tuple(recall), tuple(precision), tuple(f1),
        float(np.mean(f1)), tuple(flags),
    )


def auc_ovr(true, proba) -> tuple[float, ...]:
    """One-vs-rest ROC AUC per class (Mann-Whitney form, ties averaged); NaN if a class is absent."""
    true = np.asarray(true)
    proba = np.asarray(proba, dtype=np.float64)
    out = []
    for k in range(N_CLASSES):
        pos = true == k
        n_pos, n_neg = pos.sum(), (~pos).sum()
        if n_pos == 0 or n_neg == 0:
            out.append(float("nan"))
            continue
        ranks = rankdata(proba[:, k])
        out.append(float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg)))
    return tuple(out)


@dataclass(frozen=True)
class Evaluation:
    matrix: ConfusionMatrix
    report: MetricsReport
    features: tuple[str, ...]


def evaluate_model(model, test: CrashDataset) -> Evaluation:
    require_lineage(test, "evaluate", forbid=("balance",))
    if test.synthetic.any():
        raise ValueError("evaluation data contains synthetic rows")
    cm = confusion(test.y, predict(model, test))
    return Evaluation(cm, metrics(cm), tuple(model.feature_names))


@dataclass(frozen=True)
class ComparisonReport:
    algo: str
    full: Evaluation
    reduced: Evaluation
    k: int
    models: tuple = field(default=(), repr=False, compare=False)

    @property
    def recall_delta(self) -> tuple[float, float, float]:
        """Reduced minus full recall per class."""
        return tuple(r - f for r, f in zip(self.reduced.report.recall, self.full.report.recall))

    @property
    def matrices(self) -> tuple[ConfusionMatrix, ConfusionMatrix]:
        return self.full.matrix, self.reduced.matrix


def compare_reduced_full(
    algo: str,
    data: SplitPair,
    ranking: GcRanking,
    k: int = 17,
    config: TrainConfig | None = None,
    *,
    balanced_train: CrashDataset | None = None,
    balance_k: int = 5,
    balance_seed: int = 0,
) -> ComparisonReport:
    """Train ``algo`` on all features and on the top-``k`` ranked ones; test both on ``data.test``.

    Both models see the same balanced training rows and seeds. Pass
    ``balanced_train`` to reuse an already balanced training split.
    """
    from .balance import balance_classes

    config = config or TrainConfig(algo)
    if config.kind != algo:
        raise ValueError(f"config is for {config.kind!r}, not {algo!r}")
    require_lineage(data.test, "evaluate", need=("split:test",))
    if balanced_train is None:
        balanced_train, _ = balance_classes(data.train, balance_k, balance_seed)
    require_lineage(balanced_train, "train", forbid=("split:test",))
    reduced_names = select_top_k(ranking, k)
    # keep schema order so k = d reproduces the full model exactly
    reduced_names = [n for n in balanced_train.schema.names if n in set(reduced_names)]
    full_model = train(balanced_train, config)
    reduced_model = train(balanced_train.select_features(reduced_names), config)
    return ComparisonReport(
        algo,
        evaluate_model(full_model, data.test),
        evaluate_model(reduced_model, data.test),
        k,
        (full_model, reduced_model),
    )
