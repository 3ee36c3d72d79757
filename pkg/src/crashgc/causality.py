"""Conditional Granger-causality ranking of crash predictors.

Rows of a :class:`~crashgc.ingest.CrashDataset` are treated as one sequence in
``order_key`` order. For a predictee series X, candidate cause Y and
conditioning set Z, two lagged least-squares regressions are fitted on the same
row window:

    restricted:  X_t ~ 1 + X_{t-1..t-p} + Z_{t-1..t-r}
    full:        X_t ~ 1 + X_{t-1..t-p} + Y_{t-1..t-q} + Z_{t-1..t-r}

and the score is ``G = ln(var(restricted residuals) / var(full residuals))``.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy import linalg

from .errors import ConfigurationError, InsufficientDataError, SingularMatrixError
from .ingest import CrashDataset

logger = logging.getLogger(__name__)

SEVERITY = "severity"
VAR_FLOOR = 1e-12
RIDGE_SCALE = 1e-8
# smallest squared Cholesky pivot (on the unit-diagonal Gram) accepted as non-singular
PIVOT_TOL = 1e-12

ColumnId = Union[int, str]


@dataclass(frozen=True)
class LagSpec:
    p: int = 4
    q: int = 4
    r: int = 4

    def __post_init__(self):
        if self.p < 1 or self.q < 1 or self.r < 0:
            raise ConfigurationError(f"invalid lags p={self.p}, q={self.q}, r={self.r}")

    @classmethod
    def uniform(cls, lag: int) -> "LagSpec":
        return cls(lag, lag, lag)

    @property
    def max_lag(self) -> int:
        return max(self.p, self.q, self.r)


@dataclass(frozen=True)
class OlsFit:
    alpha: float
    coef: np.ndarray
    residuals: np.ndarray = field(repr=False)
    rss: float
    resid_var: float
    n_eff: int
    k: int
    ridge: bool = False


@dataclass(frozen=True)
class GcScore:
    feature: str
    G: float
    restricted_var: float
    full_var: float
    raw: float  # ln ratio before clamping at zero


@dataclass(frozen=True)
class GcRanking:
    scores: tuple[GcScore, ...]
    lag: LagSpec
    aic_trace: tuple[tuple[int, float], ...] = ()
    mode: str = "conditional"

    def __len__(self):
        return len(self.scores)

    @property
    def features(self) -> list[str]:
        return [s.feature for s in self.scores]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rank", "feature", "G", "restricted_var", "full_var"])
            for i, s in enumerate(self.scores, start=1):
                w.writerow([i, s.feature, repr(s.G), repr(s.restricted_var), repr(s.full_var)])

    @classmethod
    def from_csv(cls, path, lag: LagSpec | None = None) -> "GcRanking":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = sorted(csv.DictReader(fh), key=lambda r: int(r["rank"]))
        scores = tuple(
            GcScore(r["feature"], float(r["G"]), float(r["restricted_var"]), float(r["full_var"]), float(r["G"]))
            for r in rows
        )
        return cls(scores, lag or LagSpec())


# ---------------------------------------------------------------- least squares


def _solve_normal(gram: np.ndarray, xty: np.ndarray) -> tuple[np.ndarray, bool]:
    """Solve ``gram @ b = xty`` by Cholesky on the unit-diagonal rescaling.

    Falls back to a ridge of ``1e-8 * trace/k`` (trace/k is 1 after rescaling)
    when a pivot collapses. Returns the solution and whether the ridge was used.
    """
    k = gram.shape[0]
    d = np.sqrt(np.diag(gram))
    d[d == 0] = 1.0
    scaled = gram / np.outer(d, d)
    rhs = xty / d
    for ridge in (0.0, RIDGE_SCALE * np.trace(scaled) / k):
        a = scaled + ridge * np.eye(k) if ridge else scaled
        try:
            c, lower = linalg.cho_factor(a, lower=False, check_finite=True)
        except (linalg.LinAlgError, ValueError):
            continue
        if np.min(np.diag(c)) ** 2 <= PIVOT_TOL:
            continue
        b = linalg.cho_solve((c, lower), rhs)
        return b / d, bool(ridge)
    raise SingularMatrixError("normal equations are singular even after the ridge fallback")


def _fit(target: np.ndarray, design: np.ndarray, gram=None, xty=None) -> OlsFit:
    """OLS of ``target`` on ``design`` (whose first column is the intercept)."""
    if gram is None:
        gram = design.T @ design
        xty = design.T @ target
    beta, ridged = _solve_normal(gram, xty)
    resid = target - design @ beta
    rss = float(resid @ resid)
    n_eff, k = design.shape
    return OlsFit(float(beta[0]), beta[1:], resid, rss, rss / n_eff, n_eff, k, ridged)


def fit_ols(target, regressors) -> OlsFit:
    """Least-squares fit with an intercept, via the normal equations."""
    y = np.asarray(target, dtype=np.float64)
    X = np.asarray(regressors, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"target has {y.shape[0]} rows, regressors {X.shape[0]}")
    if y.shape[0] < X.shape[1] + 1:
        raise InsufficientDataError(f"{y.shape[0]} rows cannot identify {X.shape[1] + 1} coefficients")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise SingularMatrixError("non-finite values in regression inputs")
    design = np.column_stack([np.ones(y.shape[0]), X])
    return _fit(y, design)


def aic(fit: OlsFit) -> float:
    return fit.n_eff * math.log(max(fit.rss / fit.n_eff, VAR_FLOOR)) + 2 * fit.k


# ---------------------------------------------------------------- lagged designs


def _series(ds: CrashDataset, col: ColumnId) -> np.ndarray:
    if col == SEVERITY:
        return ds.y.astype(np.float64)
    if isinstance(col, str):
        return ds.X[:, ds.schema.index(col)]
    return ds.X[:, int(col)]


def _col_key(ds: CrashDataset, col: ColumnId):
    if col == SEVERITY:
        return SEVERITY
    return ds.schema.index(col) if isinstance(col, str) else int(col)


def _col_name(ds: CrashDataset, col: ColumnId) -> str:
    key = _col_key(ds, col)
    return SEVERITY if key == SEVERITY else ds.schema.names[key]


def _lag_block(x: np.ndarray, lags: int, start: int) -> np.ndarray:
    n = x.shape[0]
    return np.column_stack([x[start - j : n - j] for j in range(1, lags + 1)]) if lags else np.empty((n - start, 0))


def build_lagged_design(
    ds: CrashDataset,
    predictee: ColumnId,
    cause: ColumnId | None,
    conditioners: Sequence[ColumnId],
    lags: LagSpec,
    *,
    start: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Target ``X_t`` and lag matrix for rows ``t = start..n-1`` (0-based).

    Columns: p self-lags, then q cause-lags (when a cause is given), then r lags
    of each conditioner in the given order. ``start`` defaults to the largest of
    p, q, r so nested models share the window; no intercept column is added.
    """
    keys = [_col_key(ds, predictee)] + ([_col_key(ds, cause)] if cause is not None else [])
    keys += [_col_key(ds, c) for c in conditioners]
    if len(set(keys)) != len(keys):
        raise ConfigurationError("predictee, cause and conditioners must be distinct columns")
    start = lags.max_lag if start is None else start
    n = ds.n
    n_cols = lags.p + (lags.q if cause is not None else 0) + lags.r * len(conditioners)
    if n <= start or n - start < n_cols + 2:
        raise InsufficientDataError(
            f"{n} rows leave {max(n - start, 0)} usable rows after lagging by {start}; "
            f"need at least {n_cols + 2} for {n_cols + 1} coefficients"
        )
    x = _series(ds, predictee)
    blocks = [_lag_block(x, lags.p, start)]
    if cause is not None:
        blocks.append(_lag_block(_series(ds, cause), lags.q, start))
    for c in conditioners:
        blocks.append(_lag_block(_series(ds, c), lags.r, start))
    return x[start:], np.hstack(blocks)


def select_lag_aic(
    ds: CrashDataset,
    predictee: ColumnId = SEVERITY,
    conditioners: Sequence[ColumnId] | None = None,
    max_lag: int = 8,
) -> tuple[int, list[tuple[int, float]]]:
    """Uniform lag order minimising AIC of the all-variables regression.

    Every candidate lag is fitted on rows ``max_lag..n-1`` so the criteria are
    comparable. Ties go to the smaller lag.
    """
    if max_lag < 1:
        raise ConfigurationError("max_lag must be at least 1")
    if conditioners is None:
        conditioners = list(range(ds.d))
    trace = []
    for lag in range(1, max_lag + 1):
        target, lagged = build_lagged_design(
            ds, predictee, None, conditioners, LagSpec.uniform(lag), start=max_lag
        )
        trace.append((lag, aic(fit_ols(target, lagged))))
    best = min(trace, key=lambda t: (t[1], t[0]))[0]
    return best, trace


def _score(name: str, restricted: OlsFit, full: OlsFit) -> GcScore:
    rv, fv = restricted.resid_var, full.resid_var
    raw = math.log(max(rv, VAR_FLOOR) / max(fv, VAR_FLOOR))
    return GcScore(name, max(raw, 0.0), rv, fv, raw)


def gc_score(
    ds: CrashDataset,
    predictee: ColumnId,
    cause: ColumnId,
    conditioners: Sequence[ColumnId] = (),
    lags: LagSpec = LagSpec(),
) -> GcScore:
    """Conditional Granger score of ``cause`` on ``predictee`` given ``conditioners``."""
    if cause is None:
        raise ConfigurationError("restricted and full models coincide without a cause column")
    target, full_x = build_lagged_design(ds, predictee, cause, conditioners, lags)
    _, restr_x = build_lagged_design(ds, predictee, None, conditioners, lags)
    full = fit_ols(target, full_x)
    restricted = fit_ols(target, restr_x)
    return _score(_col_name(ds, cause), restricted, full)


def rank_predictors(
    ds: CrashDataset,
    target: ColumnId = SEVERITY,
    lags: LagSpec | str = LagSpec(),
    *,
    max_lag: int = 8,
    mode: str = "conditional",
) -> GcRanking:
    """Score every predictor on ``target`` and sort descending (ties by column order).

    ``mode="conditional"`` conditions each predictor on all the others;
    ``mode="pairwise"`` uses no conditioning set. ``lags="auto"`` picks a
    uniform lag by AIC first.
    """
    if mode not in ("conditional", "pairwise"):
        raise ConfigurationError(f"unknown ranking mode {mode!r}")
    features = [j for j in range(ds.d) if _col_key(ds, j) != _col_key(ds, target)]
    if not features:
        raise ConfigurationError("no predictors to rank")
    trace: list = []
    if isinstance(lags, str):
        if lags != "auto":
            raise ConfigurationError(f"lags must be a LagSpec or 'auto', got {lags!r}")
        best, trace = select_lag_aic(ds, target, features, max_lag)
        lags = LagSpec.uniform(best)

    # One shared design holds every lag any model needs; each model is a column
    # subset, so all fits share the Gram matrix and the row window.
    start = lags.max_lag
    width = max(lags.q, lags.r)
    n = ds.n
    n_cols_full = lags.p + lags.q + (lags.r * (len(features) - 1) if mode == "conditional" else 0)
    if n <= start or n - start < n_cols_full + 2:
        raise InsufficientDataError(f"{n} rows are too few for lag {start} with {len(features)} predictors")
    y_all = _series(ds, target)
    y = y_all[start:]
    blocks = [np.ones((n - start, 1)), _lag_block(y_all, lags.p, start)]
    offsets = {}
    pos = 1 + lags.p
    for j in features:
        blocks.append(_lag_block(ds.X[:, j], width, start))
        offsets[j] = pos
        pos += width
    design = np.hstack(blocks)
    gram = design.T @ design
    xty = design.T @ y

    base = list(range(1 + lags.p))

    def cols(j, n_lags):
        return list(range(offsets[j], offsets[j] + n_lags))

    scores = []
    for j in features:
        cond = [c for c in features if c != j] if mode == "conditional" else []
        restricted_cols = base + [c for z in cond for c in cols(z, lags.r)]
        full_cols = base + cols(j, lags.q) + [c for z in cond for c in cols(z, lags.r)]
        fits = []
        for sel in (restricted_cols, full_cols):
            sel = np.array(sel)
            fits.append(_fit(y, design[:, sel], gram[np.ix_(sel, sel)], xty[sel]))
        scores.append((j, _score(ds.schema.names[j], *fits)))
    scores.sort(key=lambda t: (-t[1].G, t[0]))
    ranking = GcRanking(tuple(s for _, s in scores), lags, tuple(trace), mode)
    logger.info("ranked %d predictors at lag %s; top: %s", len(scores), lags, ranking.features[:3])
    return ranking


def select_top_k(ranking: GcRanking, k: int = 17) -> list[str]:
    if not 1 <= k <= len(ranking):
        raise ValueError(f"k must be between 1 and {len(ranking)}, got {k}")
    return ranking.features[:k]
