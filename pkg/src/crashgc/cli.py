"""Command-line entry point (``crashgc`` / ``python -m crashgc``)."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import charts
from .balance import balance_classes
from .causality import GcRanking, LagSpec, rank_predictors, select_top_k
from .errors import ConfigurationError, StageError
from .evaluate import confusion, metrics, normalize_rows
from .ingest import CLASS_LABELS, FeatureSchema, load_csv, summarize, write_csv
from .learners import load_model, predict, save_model, train
from .pipeline import PipelineConfig, run_pipeline, tomllib
from .synthgen import generate, spec_from_mapping

log = logging.getLogger("crashgc")


def _load(args):
    schema = FeatureSchema.from_file(args.schema) if getattr(args, "schema", None) else None
    return load_csv(args.data, schema, args.severity_column, args.order_column)


def _data_args(p, data_flag="--data"):
    p.add_argument(data_flag, dest="data", required=True, help="crash table (CSV)")
    p.add_argument("--schema", help="schema CSV (name,kind,units); inferred from the data if omitted")
    p.add_argument("--severity-column", default="severity")
    p.add_argument("--order-column", help="timestamp column that defines the row sequence")


def _lag(text: str):
    if text == "auto":
        return "auto"
    try:
        return LagSpec.uniform(int(text))
    except ValueError:
        raise argparse.ArgumentTypeError(f"lag must be 'auto' or a positive integer, got {text!r}") from None


def cmd_ingest(args) -> int:
    ds = _load(args)
    stats = summarize(ds)
    if args.summary:
        stats.to_csv(args.summary)
    if args.schema_out:
        ds.schema.to_file(args.schema_out)
    counts = ds.class_counts()
    print(f"rows={ds.n} features={ds.d} " + " ".join(f"{l}={c}" for l, c in zip(CLASS_LABELS, counts)))
    return 0


def cmd_rank(args) -> int:
    ds = _load(args)
    ranking = rank_predictors(ds, lags=args.lag, max_lag=args.max_lag, mode=args.mode)
    top = min(args.top, len(ranking))
    if args.out:
        ranking.to_csv(args.out)
    if args.chart:
        charts.write(args.chart, charts.bar_chart(
            ranking.features, [s.G for s in ranking.scores],
            f"Conditional Granger causality on severity (lag {ranking.lag.p})", highlight=top,
        ))
    print(f"lag={ranking.lag.p}")
    for lag, value in ranking.aic_trace:
        print(f"aic[{lag}]={value!r}")
    print("top=" + ",".join(select_top_k(ranking, top)))
    return 0


def cmd_balance(args) -> int:
    ds = _load(args)
    balanced, report = balance_classes(ds, args.k, args.seed, round_binary=args.round_binary)
    write_csv(balanced, args.out)
    text = report.to_text()
    if args.report:
        Path(args.report).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def _config(args) -> PipelineConfig:
    config = PipelineConfig.from_toml(args.config) if args.config else PipelineConfig()
    if getattr(args, "seed", None) is not None:
        config = config.with_overrides(seed=args.seed)
    if getattr(args, "rank_on", None) is not None:
        config = config.with_overrides(rank_on=args.rank_on)
    return config


def cmd_train(args) -> int:
    config = _config(args)
    ds = _load(args)
    spec = args.features
    if spec != "all":
        if not spec.startswith("top:"):
            raise ConfigurationError(f"--features must be 'all' or 'top:<k>', got {spec!r}")
        k = int(spec[4:])
        if args.ranking:
            ranking = GcRanking.from_csv(args.ranking)
        else:
            lags = config.lag if isinstance(config.lag, str) else LagSpec.uniform(config.lag)
            ranking = rank_predictors(ds, lags=lags, max_lag=config.max_lag, mode=config.mode)
        chosen = set(select_top_k(ranking, k))
        ds = ds.select_features([n for n in ds.schema.names if n in chosen])
    model = train(ds, config.train_config(args.algo))
    save_model(model, args.model_out)
    print(f"algo={args.algo} features={len(model.feature_names)} rows={ds.n} model={args.model_out}")
    return 0


def cmd_evaluate(args) -> int:
    model = load_model(args.model)
    ds = _load(args)
    if ds.synthetic.any():
        raise ConfigurationError("test data contains synthetic rows")
    cm = confusion(ds.y, predict(model, ds))
    report = metrics(cm)
    norm = normalize_rows(cm)
    lines = [f"accuracy={report.accuracy!r}", f"macro_f1={report.macro_f1!r}"]
    for name in ("recall", "precision", "f1"):
        lines += [f"{name}.{l}={v!r}" for l, v in zip(CLASS_LABELS, getattr(report, name))]
    for i, label in enumerate(CLASS_LABELS):
        lines.append(f"counts.{label}=" + ",".join(str(int(c)) for c in cm.counts[i]))
    for i, label in enumerate(CLASS_LABELS):
        lines.append(f"normalized.{label}=" + ",".join(f"{v:.6f}" for v in norm[i]))
    lines += [f"flag={f}" for f in report.flags]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    if args.matrix:
        title = f"{model.kind.upper()} classifier ({len(model.feature_names)} features)"
        charts.write(args.matrix, charts.heatmap(norm, title))
    sys.stdout.write(text)
    return 0


def cmd_synth(args) -> int:
    with open(args.spec, "rb") as fh:
        data = tomllib.load(fh)
    data = data.get("synth", data)
    if args.seed is not None:
        data["seed"] = args.seed
    ds, truth = generate(spec_from_mapping(data))
    write_csv(ds, args.out)
    if args.truth:
        Path(args.truth).write_text(truth.to_text(), encoding="utf-8")
    print(f"rows={ds.n} planted={','.join(truth.planted_names)}")
    return 0


def cmd_pipeline_run(args) -> int:
    config = _config(args)
    result = run_pipeline(config, args.out)
    for algo, rep in result.comparisons.items():
        delta = " ".join(f"{l}={d:+.3f}" for l, d in zip(CLASS_LABELS, rep.recall_delta))
        print(f"{algo}: full acc={rep.full.report.accuracy:.4f} reduced acc={rep.reduced.report.accuracy:.4f} "
              f"recall delta {delta}")
    print(f"artifacts written to {args.out or config.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crashgc", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a crash table and write descriptive statistics")
    _data_args(p)
    p.add_argument("--summary", help="output CSV of min/max/mean/sd per column")
    p.add_argument("--schema-out", help="write the (inferred) schema here")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("rank", help="rank predictors by conditional Granger causality on severity")
    _data_args(p)
    p.add_argument("--lag", type=_lag, default=LagSpec(), help="'auto' (AIC) or a fixed lag (default 4)")
    p.add_argument("--max-lag", type=int, default=8)
    p.add_argument("--top", type=int, default=17)
    p.add_argument("--mode", choices=("conditional", "pairwise"), default="conditional")
    p.add_argument("--out", help="ranking CSV")
    p.add_argument("--chart", help="ranking bar chart (SVG)")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("balance", help="under-sample the majority class and SMOTE the minorities")
    _data_args(p)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--round-binary", action="store_true", help="round interpolated binary features")
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_balance)

    p = sub.add_parser("train", help="train one learner and save it")
    p.add_argument("--algo", choices=("dt", "rf", "xgb", "dnn"), required=True)
    _data_args(p)
    p.add_argument("--features", default="all", help="'all' or 'top:<k>'")
    p.add_argument("--ranking", help="ranking CSV for top:<k> (computed from --data if omitted)")
    p.add_argument("--config", help="TOML config with learner sections")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--model-out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="confusion matrix and metrics of a saved model on test data")
    p.add_argument("--model", required=True)
    _data_args(p, "--test")
    p.add_argument("--out", help="metrics text file")
    p.add_argument("--matrix", help="normalized confusion heatmap (SVG)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="generate a synthetic crash table with planted causes")
    p.add_argument("--spec", required=True, help="TOML generator spec ([synth] table or top-level keys)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--truth")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pipeline", help="end-to-end runs")
    psub = p.add_subparsers(dest="action", required=True)
    r = psub.add_parser("run", help="run every stage and write the report bundle")
    r.add_argument("--config", help="TOML config (defaults used if omitted)")
    r.add_argument("--seed", type=int, help="master seed (overrides the config)")
    r.add_argument("--out", help="output directory (default: [output] dir of the config)")
    r.add_argument("--rank-on", choices=("train", "balanced"),
                   help="rank on the raw training split (default) or on the balanced one")
    r.set_defaults(func=cmd_pipeline_run)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except StageError as exc:
        print(f"crashgc: {exc}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError, OSError, KeyError, np.linalg.LinAlgError) as exc:
        print(f"crashgc: error: {exc}", file=sys.stderr)
        return 1
