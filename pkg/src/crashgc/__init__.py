"""Granger-causal ranking of crash-severity predictors and four severity classifiers."""

__version__ = "0.1.0"

from .balance import BalanceReport, balance_classes, smote_oversample, undersample
from .causality import GcRanking, GcScore, LagSpec, fit_ols, gc_score, rank_predictors, select_lag_aic, select_top_k
from .evaluate import ComparisonReport, ConfusionMatrix, compare_reduced_full, confusion, metrics, normalize_rows
from .ingest import CrashDataset, FeatureSchema, SeverityClass, load_csv, split_train_test, summarize, write_csv
from .pipeline import PipelineConfig, run_pipeline
from .synthgen import SynthSpec, generate

__all__ = [
    "BalanceReport", "ComparisonReport", "ConfusionMatrix", "CrashDataset", "FeatureSchema", "GcRanking",
    "GcScore", "LagSpec", "PipelineConfig", "SeverityClass", "SynthSpec", "__version__", "balance_classes",
    "compare_reduced_full", "confusion", "fit_ols", "gc_score", "generate", "load_csv", "metrics",
    "normalize_rows", "rank_predictors", "run_pipeline", "select_lag_aic", "select_top_k", "smote_oversample",
    "split_train_test", "summarize", "undersample", "write_csv",
]
