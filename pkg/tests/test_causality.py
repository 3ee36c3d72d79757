import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crashgc.causality import (
    VAR_FLOOR,
    GcRanking,
    LagSpec,
    aic,
    build_lagged_design,
    fit_ols,
    gc_score,
    rank_predictors,
    select_lag_aic,
    select_top_k,
)
from crashgc.errors import ConfigurationError, InsufficientDataError, SingularMatrixError

from conftest import make_dataset
from oracles import gd_ols, well_conditioned_problem


def test_exact_fit():
    x = np.linspace(-1, 1, 30)
    fit = fit_ols(x, x[:, None])
    assert fit.coef[0] == pytest.approx(1.0, abs=1e-10)
    assert fit.rss == pytest.approx(0.0, abs=1e-18)


def test_intercept_only():
    fit = fit_ols(np.full(12, 3.0), np.empty((12, 0)))
    assert fit.alpha == pytest.approx(3.0)
    assert fit.resid_var == pytest.approx(0.0, abs=1e-24)
    assert fit.k == 1


def test_line_with_noise_matches_truth_and_oracle():
    rng = np.random.default_rng(4)
    x = rng.standard_normal(1000)
    y = 2 * x + 1 + 0.1 * rng.standard_normal(1000)
    fit = fit_ols(y, x)
    assert abs(fit.coef[0] - 2) < 0.02 and abs(fit.alpha - 1) < 0.02
    oracle = gd_ols(y, x[:, None])
    assert np.allclose([fit.alpha, *fit.coef], oracle, rtol=1e-6)


def test_ols_agrees_with_gradient_descent_oracle():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        y, X = well_conditioned_problem(rng)
        fit = fit_ols(y, X)
        ours = np.concatenate([[fit.alpha], fit.coef])
        oracle = gd_ols(y, X)
        worst = max(worst, np.linalg.norm(ours - oracle) / np.linalg.norm(oracle))
    assert worst < 1e-4


def test_residual_variance_is_rss_over_rows():
    rng = np.random.default_rng(1)
    y, X = well_conditioned_problem(rng)
    fit = fit_ols(y, X)
    assert fit.resid_var == pytest.approx(fit.rss / len(y))
    assert fit.n_eff == len(y) and fit.k == X.shape[1] + 1
    assert aic(fit) == pytest.approx(len(y) * math.log(fit.rss / len(y)) + 2 * fit.k)


def test_collinear_binary_design_uses_ridge():
    rng = np.random.default_rng(0)
    a = rng.integers(0, 2, 200).astype(float)
    X = np.column_stack([a, 1 - a, rng.standard_normal(200)])  # a + (1-a) = intercept
    y = 2 * a + X[:, 2] + 0.1 * rng.standard_normal(200)
    fit = fit_ols(y, X)
    assert fit.ridge
    assert np.isfinite(fit.rss) and fit.resid_var < 0.02


def test_all_zero_design_is_singular():
    with pytest.raises(SingularMatrixError):
        fit_ols(np.ones(10), np.zeros((10, 2)) * np.nan)


def test_too_few_rows():
    with pytest.raises(InsufficientDataError):
        fit_ols(np.ones(3), np.ones((3, 3)))


# ------------------------------------------------------------------ lagged designs


def test_design_shape_with_cause():
    ds = make_dataset(np.arange(30.0).reshape(10, 3))
    target, M = build_lagged_design(ds, 0, 1, [2], LagSpec(1, 1, 1))
    assert target.shape == (9,) and M.shape == (9, 3)
    # columns: x0_{t-1}, x1_{t-1}, x2_{t-1}
    assert M[0].tolist() == [0.0, 1.0, 2.0]
    assert target[0] == 3.0


def test_design_without_cause():
    ds = make_dataset(np.random.default_rng(0).standard_normal((40, 4)))
    _, M = build_lagged_design(ds, 0, None, [1, 2, 3], LagSpec(3, 2, 2))
    assert M.shape[1] == 3 + 2 * 3


def test_design_lag_order():
    x = np.arange(12.0)
    ds = make_dataset(np.column_stack([x, 10 * x]))
    target, M = build_lagged_design(ds, 0, 1, [], LagSpec(2, 3, 0))
    assert target.tolist() == list(range(3, 12))
    assert M[0].tolist() == [2, 1, 20, 10, 0]


def test_design_too_short():
    ds = make_dataset(np.zeros((6, 2)))
    with pytest.raises(InsufficientDataError):
        build_lagged_design(ds, 0, 1, [], LagSpec(4, 4, 4))
    # 6 usable rows identify the 5 coefficients of the restricted model only
    ds = make_dataset(np.random.default_rng(0).standard_normal((10, 2)))
    target, M = build_lagged_design(ds, 0, None, [], LagSpec(4, 4, 0))
    assert target.shape == (6,) and M.shape == (6, 4)
    with pytest.raises(InsufficientDataError):
        build_lagged_design(ds, 0, 1, [], LagSpec(4, 4, 0))


def test_design_rejects_repeated_columns():
    ds = make_dataset(np.zeros((20, 2)))
    with pytest.raises(ConfigurationError):
        build_lagged_design(ds, 0, 1, [1], LagSpec(1, 1, 1))
    with pytest.raises(ConfigurationError):
        build_lagged_design(ds, 0, None, [0], LagSpec(1, 1, 1))


def test_lagspec_validation():
    with pytest.raises(ConfigurationError):
        LagSpec(0, 1, 1)
    with pytest.raises(ConfigurationError):
        LagSpec(1, 1, -1)
    assert LagSpec() == LagSpec(4, 4, 4)


# ------------------------------------------------------------------ lag selection


def noise_panel(rng, n, d):
    return [rng.standard_normal(n) for _ in range(d)]


def lag_choice(series, rng, max_lag=6, n_noise=20):
    cols = [series] + noise_panel(rng, series.shape[0], n_noise)
    ds = make_dataset(np.column_stack(cols))
    best, trace = select_lag_aic(ds, 0, list(range(1, n_noise + 1)), max_lag)
    assert [t[0] for t in trace] == list(range(1, max_lag + 1))
    return best


@pytest.mark.slow
def test_aic_white_noise_prefers_lag_one():
    hits = 0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        hits += lag_choice(rng.standard_normal(2000), rng) == 1
    assert hits >= 45


@pytest.mark.slow
def test_aic_recovers_ar2():
    hits = 0
    for seed in range(50):
        rng = np.random.default_rng(1000 + seed)
        n, burn = 5000, 200
        eps = rng.standard_normal(n + burn)
        y = np.zeros(n + burn)
        for t in range(2, n + burn):
            y[t] = 0.5 * y[t - 1] + 0.3 * y[t - 2] + eps[t]
        hits += lag_choice(y[burn:], rng) == 2
    assert hits >= 45


def test_aic_single_candidate():
    rng = np.random.default_rng(3)
    ds = make_dataset(rng.standard_normal((200, 3)))
    best, trace = select_lag_aic(ds, 0, [1, 2], max_lag=1)
    assert best == 1 and len(trace) == 1


def test_aic_fits_share_one_window():
    rng = np.random.default_rng(5)
    ds = make_dataset(rng.standard_normal((300, 2)))
    _, trace = select_lag_aic(ds, 0, [1], max_lag=5)
    target, lagged = build_lagged_design(ds, 0, None, [1], LagSpec.uniform(2), start=5)
    assert target.shape[0] == 295
    assert trace[1][1] == pytest.approx(aic(fit_ols(target, lagged)))


# ------------------------------------------------------------------ Granger scores


def test_independent_cause_scores_near_zero():
    rng = np.random.default_rng(11)
    n = 20000
    y = np.zeros(n)
    e = rng.standard_normal(n)
    for t in range(1, n):
        y[t] = 0.5 * y[t - 1] + e[t]
    ds = make_dataset(np.column_stack([y, rng.standard_normal(n)]))
    score = gc_score(ds, 0, 1)
    assert 0.0 <= score.G < 0.01


def test_score_matches_closed_form():
    # innovation of the restricted AR model is 0.8*x_{t-1} + e_t, variance 1.64
    rng = np.random.default_rng(7)
    n = 100_000
    x = rng.standard_normal(n)
    e = rng.standard_normal(n)
    y = np.zeros(n)
    for t in range(1, n):
        y[t] = 0.5 * y[t - 1] + 0.8 * x[t - 1] + e[t]
    ds = make_dataset(np.column_stack([y, x]))
    score = gc_score(ds, 0, 1)
    expected = math.log(1 + 0.64 * x.var() / e.var())
    assert abs(score.G - expected) < 0.1 * expected
    assert score.restricted_var == pytest.approx(1.64, rel=0.05)


def test_deterministic_cause_hits_floor():
    rng = np.random.default_rng(2)
    x = rng.standard_normal(500)
    y = np.concatenate([[0.0], x[:-1]])
    ds = make_dataset(np.column_stack([y, x]))
    score = gc_score(ds, 0, 1, lags=LagSpec(2, 2, 0))
    assert np.isfinite(score.G)
    assert score.full_var < VAR_FLOOR
    assert score.G == pytest.approx(math.log(score.restricted_var / VAR_FLOOR))


def test_score_needs_a_cause():
    ds = make_dataset(np.zeros((20, 2)))
    with pytest.raises(ConfigurationError):
        gc_score(ds, 0, None)
    with pytest.raises(ConfigurationError):
        gc_score(ds, 0, 1, [1])


@st.composite
def nested_case(draw):
    seed = draw(st.integers(0, 2**31 - 1))
    rng = np.random.default_rng(seed)
    n = draw(st.integers(40, 300))
    d = draw(st.integers(2, 5))
    kinds = draw(st.lists(st.sampled_from(["gauss", "binary", "heavy", "scaled"]), min_size=d, max_size=d))
    cols = []
    for kind in kinds:
        if kind == "gauss":
            cols.append(rng.standard_normal(n))
        elif kind == "binary":
            cols.append(rng.integers(0, 2, n).astype(float))
        elif kind == "heavy":
            cols.append(rng.standard_t(2, n))
        else:
            cols.append(rng.standard_normal(n) * 10 ** rng.uniform(-4, 5))
    lags = LagSpec(draw(st.integers(1, 4)), draw(st.integers(1, 4)), draw(st.integers(0, 3)))
    return make_dataset(np.column_stack(cols)), lags


@settings(max_examples=100, deadline=None)
@given(nested_case())
def test_nested_models_never_fit_worse(case):
    ds, lags = case
    cond = list(range(2, ds.d))
    score = gc_score(ds, 0, 1, cond, lags)
    assert score.raw >= -1e-9
    assert score.restricted_var * score.full_var >= 0
    assert score.G >= 0


def test_window_is_shared_by_both_models():
    ds = make_dataset(np.random.default_rng(0).standard_normal((50, 3)))
    for lags in (LagSpec(1, 3, 2), LagSpec(4, 1, 1), LagSpec(2, 2, 0)):
        t_full, _ = build_lagged_design(ds, 0, 1, [2], lags)
        t_restr, _ = build_lagged_design(ds, 0, None, [2], lags)
        assert np.array_equal(t_full, t_restr)
        assert t_full.shape[0] == 50 - lags.max_lag


# ------------------------------------------------------------------ ranking


def planted_dataset(seed, n=3000, d=6):
    """Severity driven by lag-1 values of columns 0 and 2."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    s = np.zeros(n)
    s[1:] = X[:-1, 0] + 0.7 * X[:-1, 2] + 0.5 * rng.standard_normal(n - 1)
    y = np.digitize(s, np.quantile(s, [0.6, 0.9]))
    return make_dataset(X, y)


def test_conditional_ranking_matches_individual_scores():
    ds = planted_dataset(0)
    ranking = rank_predictors(ds, lags=LagSpec(2, 2, 2))
    assert set(ranking.features[:2]) == {"c0", "c2"}
    for s in ranking.scores:
        j = ds.schema.index(s.feature)
        single = gc_score(ds, "severity", j, [c for c in range(ds.d) if c != j], LagSpec(2, 2, 2))
        assert s.G == pytest.approx(single.G, rel=1e-7, abs=1e-12)


def test_pairwise_mode():
    ds = planted_dataset(1)
    ranking = rank_predictors(ds, lags=LagSpec(2, 2, 2), mode="pairwise")
    assert ranking.mode == "pairwise"
    s = {sc.feature: sc for sc in ranking.scores}
    assert s["c0"].G == pytest.approx(gc_score(ds, "severity", 0, [], LagSpec(2, 2, 2)).G, rel=1e-7)
    with pytest.raises(ConfigurationError):
        rank_predictors(ds, mode="both")


def test_ranking_sorted_and_deterministic():
    ds = planted_dataset(2)
    a, b = rank_predictors(ds), rank_predictors(ds)
    g = [s.G for s in a.scores]
    assert g == sorted(g, reverse=True)
    assert a == b


def test_ties_follow_schema_order():
    rng = np.random.default_rng(0)
    n = 400
    X = np.zeros((n, 4))
    X[:, 1] = rng.standard_normal(n)
    y = rng.integers(0, 3, n)
    ranking = rank_predictors(make_dataset(X, y), lags=LagSpec(1, 1, 1))
    zero = [s.feature for s in ranking.scores if s.G == 0.0]
    assert zero == sorted(zero, key=lambda nm: int(nm[1:]))
    assert ranking.features[-3:] == ["c0", "c2", "c3"]


def test_scaling_a_predictor_keeps_scores():
    ds = planted_dataset(3, n=2000, d=5)
    base = rank_predictors(ds, lags=LagSpec(3, 3, 3))
    for factor in (1e-3, 7.5, 1e5):
        X = ds.X.copy()
        X[:, 1] *= factor
        scaled = rank_predictors(make_dataset(X, ds.y), lags=LagSpec(3, 3, 3))
        assert scaled.features == base.features
        for a, b in zip(base.scores, scaled.scores):
            assert abs(a.G - b.G) < 1e-8


def test_single_predictor():
    rng = np.random.default_rng(0)
    ranking = rank_predictors(make_dataset(rng.standard_normal((100, 1)), rng.integers(0, 3, 100)))
    assert ranking.features == ["c0"]


def test_auto_lag_records_aic_trace():
    ds = planted_dataset(4)
    ranking = rank_predictors(ds, lags="auto", max_lag=4)
    assert [t[0] for t in ranking.aic_trace] == [1, 2, 3, 4]
    assert ranking.lag.p == min(ranking.aic_trace, key=lambda t: (t[1], t[0]))[0]


def test_top_k():
    ds = planted_dataset(5)
    ranking = rank_predictors(ds)
    assert select_top_k(ranking, len(ranking)) == ranking.features
    assert select_top_k(ranking, 1) == ranking.features[:1]
    for bad in (0, len(ranking) + 1):
        with pytest.raises(ValueError):
            select_top_k(ranking, bad)


def test_ranking_csv_round_trip(tmp_path):
    ranking = rank_predictors(planted_dataset(6))
    ranking.to_csv(tmp_path / "r.csv")
    back = GcRanking.from_csv(tmp_path / "r.csv")
    assert back.features == ranking.features
    assert [s.G for s in back.scores] == [s.G for s in ranking.scores]
    header = (tmp_path / "r.csv").read_text().splitlines()[0]
    assert header == "rank,feature,G,restricted_var,full_var"
