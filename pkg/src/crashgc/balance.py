"""Class balancing: random under-sampling of the majority, SMOTE for minorities."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import ValidationError
from .ingest import CLASS_LABELS, CrashDataset, SeverityClass, require_lineage

logger = logging.getLogger(__name__)

DEFAULT_K = 5


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        scale = X.std(axis=0)
        scale[scale == 0] = 1.0
        return cls(X.mean(axis=0), scale)

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.scale


@dataclass(frozen=True)
class SyntheticOrigin:
    """Where a synthetic row came from: ``x = base + u * (neighbor - base)``."""

    cls: int
    base_key: int
    neighbor_key: int
    u: float


@dataclass
class BalanceReport:
    before: tuple[int, int, int]
    after: tuple[int, int, int]
    target_count: int
    k_neighbors: int
    seed: int
    n_synthetic: int = 0
    fractional_binary_cells: int = 0
    origins: list[SyntheticOrigin] = field(default_factory=list, repr=False)
    warnings: list[str] = field(default_factory=list)

    def to_text(self) -> str:
        lines = [
            f"target_count={self.target_count}",
            f"k_neighbors={self.k_neighbors}",
            f"seed={self.seed}",
        ]
        for c, label in enumerate(CLASS_LABELS):
            lines.append(f"before.{label}={self.before[c]}")
        for c, label in enumerate(CLASS_LABELS):
            lines.append(f"after.{label}={self.after[c]}")
        lines.append(f"synthetic_rows={self.n_synthetic}")
        lines.append(f"fractional_binary_cells={self.fractional_binary_cells}")
        lines += [f"warning={w}" for w in self.warnings]
        return "\n".join(lines) + "\n"


def _class_rows(ds: CrashDataset, cls) -> np.ndarray:
    return np.flatnonzero(ds.y == int(cls))


def undersample(ds: CrashDataset, cls, target: int, seed: int = 0) -> CrashDataset:
    """Keep a uniform random ``target``-row subset of class ``cls``; other rows untouched."""
    rows = _class_rows(ds, cls)
    if target > rows.size:
        raise ValueError(
            f"cannot under-sample class {SeverityClass(int(cls)).name} from {rows.size} to {target} rows; "
            "oversample instead"
        )
    if target < 0:
        raise ValueError("target count must be non-negative")
    keep = np.random.default_rng(seed).choice(rows, size=target, replace=False)
    mask = ds.y != int(cls)
    mask[keep] = True
    return ds.take(np.flatnonzero(mask))


def _neighbors(Z: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k nearest other rows of Z (Euclidean), excluding each row itself."""
    tree = cKDTree(Z)
    _, nn = tree.query(Z, k=k + 1)
    nn = np.asarray(nn).reshape(Z.shape[0], k + 1)
    out = np.empty((Z.shape[0], k), np.int64)
    for i in range(Z.shape[0]):
        others = nn[i][nn[i] != i]
        out[i] = others[:k]
    return out


def _smote_rows(ds, cls, target, k, rng, standardizer, round_binary):
    """Synthetic feature rows for class ``cls`` plus their origins."""
    rows = _class_rows(ds, cls)
    count = rows.size
    n_new = target - count
    warnings = []
    if count == 0:
        raise ValueError(f"class {SeverityClass(int(cls)).name} has no rows to oversample")
    if n_new <= 0:
        return np.empty((0, ds.d)), [], warnings
    Xc = ds.X[rows]
    if count == 1:
        msg = f"class {SeverityClass(int(cls)).name} has a single row; duplicating it {n_new} times"
        logger.warning(msg)
        warnings.append(msg)
        key = int(ds.order_key[rows[0]])
        return np.repeat(Xc, n_new, axis=0), [SyntheticOrigin(int(cls), key, key, 0.0)] * n_new, warnings
    k_eff = min(k, count - 1)
    nn = _neighbors(standardizer.transform(Xc), k_eff)
    base = rng.integers(0, count, n_new)
    pick = nn[base, rng.integers(0, k_eff, n_new)]
    u = rng.uniform(np.nextafter(0.0, 1.0), 1.0, n_new)
    new = Xc[base] + u[:, None] * (Xc[pick] - Xc[base])
    if round_binary:
        binary = ds.schema.binary_mask
        new[:, binary] = np.round(new[:, binary])
    keys = ds.order_key[rows]
    origins = [SyntheticOrigin(int(cls), int(keys[b]), int(keys[p]), float(w)) for b, p, w in zip(base, pick, u)]
    return new, origins, warnings


def _append(ds: CrashDataset, new_X: np.ndarray, new_y: np.ndarray) -> CrashDataset:
    start = int(ds.order_key[-1]) + 1 if ds.n else 0
    keys = np.arange(start, start + new_y.shape[0])
    return CrashDataset(
        ds.schema,
        np.vstack([ds.X, new_X]),
        np.concatenate([ds.y, new_y]),
        np.concatenate([ds.order_key, keys]),
        np.concatenate([ds.synthetic, np.ones(new_y.shape[0], bool)]),
        ds.lineage,
    )


def smote_oversample(
    ds: CrashDataset,
    cls,
    target: int,
    k: int = DEFAULT_K,
    seed: int = 0,
    *,
    standardizer: Standardizer | None = None,
    round_binary: bool = False,
) -> CrashDataset:
    """Append ``target - count(cls)`` SMOTE rows for class ``cls``.

    Neighbours are searched among class rows on z-scored features; pass the
    ``standardizer`` fitted on the full training split to share it across
    classes (defaults to one fitted on ``ds``).
    """
    if target < _class_rows(ds, cls).size:
        raise ValueError("SMOTE target is below the current class count; under-sample instead")
    standardizer = standardizer or Standardizer.fit(ds.X)
    new, _, _ = _smote_rows(ds, cls, target, k, np.random.default_rng(seed), standardizer, round_binary)
    return _append(ds, new, np.full(new.shape[0], int(cls), np.int64))


def class_seed(seed: int, cls: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=seed, spawn_key=(int(cls),))


def balance_classes(
    train: CrashDataset, k: int = DEFAULT_K, seed: int = 0, *, round_binary: bool = False
) -> tuple[CrashDataset, BalanceReport]:
    """Bring every class to the median class count.

    Larger classes are randomly under-sampled, smaller ones SMOTE-oversampled.
    Output rows: surviving originals in order, then synthetic rows grouped by
    class in generation order.
    """
    require_lineage(train, "balance", forbid=("split:test",))
    before = tuple(int(c) for c in train.class_counts())
    if min(before) == 0:
        empty = [CLASS_LABELS[c] for c in range(3) if before[c] == 0]
        raise ValidationError(f"cannot balance: classes {empty} have no training rows")
    target = int(np.median(before))
    standardizer = Standardizer.fit(train.X)

    ds = train
    for c in range(3):
        if before[c] > target:
            ds = undersample(ds, c, target, np.random.default_rng(class_seed(seed, c)))
    new_X, new_y, origins, warnings = [], [], [], []
    for c in range(3):
        if before[c] < target:
            rng = np.random.default_rng(class_seed(seed, c))
            X_c, o_c, w_c = _smote_rows(train, c, target, k, rng, standardizer, round_binary)
            new_X.append(X_c)
            new_y.append(np.full(X_c.shape[0], c, np.int64))
            origins += o_c
            warnings += w_c
    if new_X:
        ds = _append(ds, np.vstack(new_X), np.concatenate(new_y))
    ds = ds.with_lineage("balance")

    binary = train.schema.binary_mask
    syn_bin = ds.X[ds.synthetic][:, binary]
    fractional = int(np.sum((syn_bin != 0) & (syn_bin != 1)))
    report = BalanceReport(
        before,
        tuple(int(c) for c in ds.class_counts()),
        target,
        k,
        seed,
        int(ds.synthetic.sum()),
        fractional,
        origins,
        warnings,
    )
    return ds, report
