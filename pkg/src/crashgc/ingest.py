"""Loading, validation, summary statistics, and train/test splitting of crash tables.

A crash table is a CSV file with one header row. Every schema feature must be
present as a numeric column, plus one severity column holding either the
numeric codes 0/1/2 or the labels PDO/BC/KA. Two optional bookkeeping columns
are recognised: ``order_key`` (explicit chronological position) and
``synthetic`` (1 for oversampled rows).
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EmptyDatasetError,
    LineageError,
    ParseError,
    SchemaError,
    ValidationError,
)

ORDER_COLUMN = "order_key"
SYNTHETIC_COLUMN = "synthetic"
RESERVED_NAMES = frozenset({"severity", ORDER_COLUMN, SYNTHETIC_COLUMN})
KINDS = ("binary", "continuous")


class SeverityClass(enum.IntEnum):
    PDO = 0
    BC = 1
    KA = 2


N_CLASSES = len(SeverityClass)
CLASS_LABELS = tuple(c.name for c in SeverityClass)


def parse_severity(value: str) -> int:
    """Map a severity cell ('0', '2', 'KA', 'pdo', ...) to its class code."""
    text = value.strip()
    upper = text.upper()
    if upper in SeverityClass.__members__:
        return int(SeverityClass[upper])
    if text in ("0", "1", "2"):
        return int(text)
    raise ValueError(f"unknown severity code {value!r}")


@dataclass(frozen=True)
class Feature:
    name: str
    kind: str = "continuous"
    units: str = ""

    def __post_init__(self):
        if not self.name or not self.name.strip():
            raise SchemaError("feature names must be non-empty")
        if self.kind not in KINDS:
            raise SchemaError(f"feature {self.name!r}: kind must be one of {KINDS}, got {self.kind!r}")


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered predictor list; position in ``entries`` is the column index everywhere."""

    entries: tuple[Feature, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        names = [f.name for f in self.entries]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise SchemaError(f"duplicate feature names: {dupes}")
        reserved = sorted(set(names) & RESERVED_NAMES)
        if reserved:
            raise SchemaError(f"reserved column names used as features: {reserved}")

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.entries]

    @property
    def binary_mask(self) -> np.ndarray:
        return np.array([f.kind == "binary" for f in self.entries], dtype=bool)

    def index(self, name: str) -> int:
        for i, f in enumerate(self.entries):
            if f.name == name:
                return i
        raise SchemaError(f"no feature named {name!r}")

    def subset(self, names: Iterable[str]) -> "FeatureSchema":
        return FeatureSchema(tuple(self.entries[self.index(n)] for n in names))

    @classmethod
    def from_file(cls, path) -> "FeatureSchema":
        """Read a schema CSV with columns ``name,kind[,units]``."""
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not {"name", "kind"} <= set(reader.fieldnames):
                raise SchemaError(f"{path}: schema file needs 'name' and 'kind' columns")
            entries = [
                Feature(row["name"].strip(), row["kind"].strip(), (row.get("units") or "").strip())
                for row in reader
            ]
        if not entries:
            raise SchemaError(f"{path}: schema has no features")
        return cls(tuple(entries))

    def to_file(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["name", "kind", "units"])
            for f in self.entries:
                writer.writerow([f.name, f.kind, f.units])


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CrashDataset:
    """Immutable crash table: features ``X`` (n x d), labels ``y``, chronological ``order_key``.

    ``synthetic`` marks oversampled rows; ``lineage`` records the stages a table
    went through so later stages can refuse data they must not see.
    """

    schema: FeatureSchema
    X: np.ndarray
    y: np.ndarray
    order_key: np.ndarray
    synthetic: np.ndarray | None = None
    lineage: tuple[str, ...] = ()

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y)
        n = y.shape[0]
        if X.ndim != 2 or X.shape[0] != n:
            raise ValidationError(f"X has shape {X.shape}, expected ({n}, {len(self.schema)})")
        if X.shape[1] != len(self.schema):
            raise ValidationError(f"X has {X.shape[1]} columns but schema lists {len(self.schema)}")
        if n and not np.all(np.isin(y, (0, 1, 2))):
            raise ValidationError("labels must be severity codes 0, 1, 2")
        if not np.all(np.isfinite(X)):
            r, c = np.argwhere(~np.isfinite(X))[0]
            raise ValidationError(f"missing or non-finite value at row {r}, column {self.schema.names[c]!r}")
        order_key = np.asarray(self.order_key, dtype=np.int64)
        if order_key.shape != (n,):
            raise ValidationError("order_key length must equal the number of rows")
        if n > 1 and not np.all(np.diff(order_key) > 0):
            raise ValidationError("order_key must be strictly increasing")
        synthetic = np.zeros(n, dtype=bool) if self.synthetic is None else np.asarray(self.synthetic, dtype=bool)
        if synthetic.shape != (n,):
            raise ValidationError("synthetic flag length must equal the number of rows")

        binary = self.schema.binary_mask
        if binary.any() and n:
            Xb = X[:, binary]
            real = ~synthetic
            bad_real = real[:, None] & (Xb != 0) & (Xb != 1)
            bad_syn = synthetic[:, None] & ((Xb < 0) | (Xb > 1))
            bad = bad_real | bad_syn
            if bad.any():
                r, c = np.argwhere(bad)[0]
                name = np.array(self.schema.names)[binary][c]
                raise ValidationError(
                    f"binary column {name!r} holds {Xb[r, c]!r} at row {r}; expected 0 or 1"
                )

        object.__setattr__(self, "X", _readonly(X))
        object.__setattr__(self, "y", _readonly(y.astype(np.int64)))
        object.__setattr__(self, "order_key", _readonly(order_key))
        object.__setattr__(self, "synthetic", _readonly(synthetic))
        object.__setattr__(self, "lineage", tuple(self.lineage))

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def d(self) -> int:
        return len(self.schema)

    def __len__(self):
        return self.n

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=3)

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.schema.index(name)]

    def take(self, rows: Sequence[int], tag: str | None = None) -> "CrashDataset":
        """Rows by position (kept in the given order, which must respect order_key)."""
        rows = np.asarray(rows, dtype=np.int64)
        lineage = self.lineage + ((tag,) if tag else ())
        return CrashDataset(
            self.schema, self.X[rows], self.y[rows], self.order_key[rows],
            self.synthetic[rows], lineage,
        )

    def select_features(self, names: Sequence[str]) -> "CrashDataset":
        cols = [self.schema.index(n) for n in names]
        return CrashDataset(
            self.schema.subset(names), self.X[:, cols], self.y, self.order_key,
            self.synthetic, self.lineage,
        )

    def with_lineage(self, tag: str) -> "CrashDataset":
        return CrashDataset(self.schema, self.X, self.y, self.order_key, self.synthetic, self.lineage + (tag,))

    def same_data(self, other: "CrashDataset") -> bool:
        """Bit-exact equality of schema, values, labels, order and synthetic flags."""
        return (
            self.schema == other.schema
            and self.X.shape == other.X.shape
            and np.array_equal(self.X.view(np.uint64), other.X.view(np.uint64))
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.order_key, other.order_key)
            and np.array_equal(self.synthetic, other.synthetic)
        )


def require_lineage(ds: CrashDataset, stage: str, *, forbid: Iterable[str] = (), need: Iterable[str] = ()):
    for tag in forbid:
        if tag in ds.lineage:
            raise LineageError(f"stage {stage!r} received data tagged {tag!r} (lineage {ds.lineage})")
    for tag in need:
        if tag not in ds.lineage:
            raise LineageError(f"stage {stage!r} requires data tagged {tag!r} (lineage {ds.lineage})")


def _parse_float(cell: str, row: int, column: str) -> float:
    text = cell.strip()
    if not text:
        raise ParseError(f"missing value at row {row}, column {column!r}", row, column)
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"non-numeric value {cell!r} at row {row}, column {column!r}", row, column) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite value {cell!r} at row {row}, column {column!r}", row, column)
    return value


def infer_schema(path, severity_column: str = "severity", order_column: str | None = None) -> FeatureSchema:
    """Schema from a CSV header: every non-bookkeeping column, binary when it only holds 0/1."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyDatasetError(f"{path}: file is empty")
        skip = {severity_column, ORDER_COLUMN, SYNTHETIC_COLUMN, order_column}
        cols = [(i, h.strip()) for i, h in enumerate(header) if h.strip() not in skip]
        binary = {name: True for _, name in cols}
        for r, line in enumerate(reader, start=1):
            for i, name in cols:
                if binary[name] and i < len(line) and line[i].strip() not in ("0", "1", "0.0", "1.0"):
                    binary[name] = False
    return FeatureSchema(tuple(Feature(name, "binary" if binary[name] else "continuous") for _, name in cols))


def load_csv(
    path,
    schema: FeatureSchema | None = None,
    severity_column: str = "severity",
    order_column: str | None = None,
) -> CrashDataset:
    """Load a crash table.

    Rows keep file order unless the file carries an ``order_key`` column (used
    as-is after a stable sort) or ``order_column`` names a timestamp column (the
    table is stably sorted by it and re-keyed 0..n-1).
    """
    path = Path(path)
    if schema is None:
        schema = infer_schema(path, severity_column, order_column)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyDatasetError(f"{path}: file is empty")
        header = [h.strip() for h in header]
        where = {h: i for i, h in enumerate(header)}
        needed = schema.names + [severity_column] + ([order_column] if order_column else [])
        missing = [c for c in needed if c not in where]
        if missing:
            raise SchemaError(f"{path}: missing columns {missing}")
        feat_idx = [where[nm] for nm in schema.names]
        sev_idx = where[severity_column]
        key_idx = where.get(ORDER_COLUMN)
        syn_idx = where.get(SYNTHETIC_COLUMN)
        time_idx = where[order_column] if order_column else None

        rows, labels, keys, syn, times = [], [], [], [], []
        for r, line in enumerate(reader, start=1):
            if not line or all(not c.strip() for c in line):
                continue
            if len(line) < len(header):
                raise ParseError(f"row {r} has {len(line)} cells, header has {len(header)}", r, None)
            rows.append([_parse_float(line[i], r, nm) for i, nm in zip(feat_idx, schema.names)])
            try:
                labels.append(parse_severity(line[sev_idx]))
            except ValueError as exc:
                raise ValidationError(f"row {r}, column {severity_column!r}: {exc}") from None
            if key_idx is not None:
                k = _parse_float(line[key_idx], r, ORDER_COLUMN)
                if k != int(k):
                    raise ParseError(f"order_key must be an integer at row {r}", r, ORDER_COLUMN)
                keys.append(int(k))
            if syn_idx is not None:
                syn.append(_parse_float(line[syn_idx], r, SYNTHETIC_COLUMN) != 0)
            if time_idx is not None:
                times.append(_parse_float(line[time_idx], r, order_column))

    if not rows:
        raise EmptyDatasetError(f"{path}: no data rows")
    X = np.array(rows, dtype=np.float64).reshape(len(rows), len(schema))
    y = np.array(labels, dtype=np.int64)
    synthetic = np.array(syn, dtype=bool) if syn else None
    n = len(labels)
    if time_idx is not None:
        perm = np.argsort(np.array(times), kind="stable")
        order_key = np.arange(n)
    elif key_idx is not None:
        perm = np.argsort(np.array(keys), kind="stable")
        order_key = np.array(keys, dtype=np.int64)[perm]
    else:
        perm = np.arange(n)
        order_key = np.arange(n)
    X, y = X[perm], y[perm]
    if synthetic is not None:
        synthetic = synthetic[perm]

    binary = schema.binary_mask
    real = np.ones(n, bool) if synthetic is None else ~synthetic
    for j in np.flatnonzero(binary):
        bad = np.flatnonzero(real & (X[:, j] != 0) & (X[:, j] != 1))
        if bad.size:
            r = int(perm[bad[0]]) + 1
            raise ValidationError(
                f"{path}: binary column {schema.names[j]!r} holds {X[bad[0], j]!r} at data row {r}"
            )
    return CrashDataset(schema, X, y, order_key, synthetic, (f"load:{path.name}",))


def write_csv(ds: CrashDataset, path) -> None:
    """Write a dataset so that :func:`load_csv` reproduces it bit for bit."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = ds.schema.names + ["severity", ORDER_COLUMN]
        with_syn = bool(ds.synthetic.any())
        if with_syn:
            header.append(SYNTHETIC_COLUMN)
        writer.writerow(header)
        for i in range(ds.n):
            row = [repr(float(v)) for v in ds.X[i]]
            row += [str(int(ds.y[i])), str(int(ds.order_key[i]))]
            if with_syn:
                row.append("1" if ds.synthetic[i] else "0")
            writer.writerow(row)


@dataclass(frozen=True)
class ColumnStats:
    name: str
    min: float
    max: float
    mean: float
    sd: float


@dataclass(frozen=True)
class SummaryStats:
    """Descriptive statistics; severity indicators first (KA, BC, PDO), then features."""

    n: int
    columns: tuple[ColumnStats, ...]

    def __getitem__(self, name: str) -> ColumnStats:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["parameter", "min", "max", "mean", "sd"])
            for c in self.columns:
                writer.writerow([c.name, repr(c.min), repr(c.max), repr(c.mean), repr(c.sd)])


SEVERITY_INDICATORS = (("KA", 2), ("BC", 1), ("PDO", 0))


def _column_stats(name: str, v: np.ndarray) -> ColumnStats:
    lo, hi = float(v.min()), float(v.max())
    mean = min(max(float(v.mean()), lo), hi)
    return ColumnStats(name, lo, hi, mean, float(v.std()))


def summarize(ds: CrashDataset) -> SummaryStats:
    """Min, max, mean and population sd per column (severity as three indicators)."""
    if ds.n == 0:
        raise EmptyDatasetError("cannot summarize an empty dataset")
    cols = [_column_stats(name, (ds.y == code).astype(np.float64)) for name, code in SEVERITY_INDICATORS]
    cols += [_column_stats(name, ds.X[:, j]) for j, name in enumerate(ds.schema.names)]
    return SummaryStats(ds.n, tuple(cols))


@dataclass(frozen=True)
class SplitPair:
    train: CrashDataset
    test: CrashDataset
    fraction: float
    seed: int
    train_rows: np.ndarray = field(repr=False, default=None)
    test_rows: np.ndarray = field(repr=False, default=None)


def n_train_rows(n: int, fraction: float) -> int:
    return int(math.floor(fraction * n + 0.5))


def split_train_test(ds: CrashDataset, fraction: float = 0.8, seed: int = 0) -> SplitPair:
    """Uniform random partition; each side keeps chronological order internally."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"split fraction must lie in (0, 1), got {fraction}")
    if ds.n < 2:
        raise ValueError("need at least two rows to split")
    n_train = n_train_rows(ds.n, fraction)
    if n_train in (0, ds.n):
        raise ValueError(f"fraction {fraction} leaves one side of a {ds.n}-row split empty")
    perm = np.random.default_rng(seed).permutation(ds.n)
    train_rows = np.sort(perm[:n_train])
    test_rows = np.sort(perm[n_train:])
    return SplitPair(
        ds.take(train_rows, "split:train"),
        ds.take(test_rows, "split:test"),
        float(fraction),
        int(seed),
        train_rows,
        test_rows,
    )
