"""End-to-end run: load, split, rank, select, balance, train and evaluate.

Everything a run depends on lives in :class:`PipelineConfig`. A config is read
from TOML (``[section]`` tables with flat keys) and written back as
``section.key=value`` lines; the run manifest starts with those lines, so
``PipelineConfig.from_manifest`` reproduces a run bit for bit.
"""

from __future__ import annotations

import csv
import hashlib
import io
import logging
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np

from . import charts
from .balance import BalanceReport, balance_classes
from .causality import GcRanking, LagSpec, rank_predictors, select_top_k
from .errors import ConfigurationError, StageError
from .evaluate import ComparisonReport, compare_reduced_full, normalize_rows
from .ingest import CLASS_LABELS, CrashDataset, FeatureSchema, SplitPair, load_csv, require_lineage, split_train_test
from .learners import KINDS, BoostParams, ForestParams, MlpParams, TrainConfig, TreeParams
from .synthgen import SynthSpec, generate, spec_from_mapping

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

logger = logging.getLogger(__name__)

MANIFEST_FORMAT = "crashgc-manifest"
MANIFEST_VERSION = 1

# config keys whose name differs from the learner parameter they set
PARAM_ALIASES = {
    "rf": {"estimators": "n_estimators"},
    "dnn": {"layers": "hidden_layers", "batch": "batch_size"},
}
PARAM_SECTIONS = {"dt": TreeParams, "rf": ForestParams, "xgb": BoostParams, "dnn": MlpParams}

# section -> {key: attribute}
PLAIN_KEYS = {
    "data": {"path": "data_path", "schema": "schema_path", "severity_column": "severity_column",
             "order_column": "order_column"},
    "split": {"fraction": "fraction"},
    "causality": {"lag": "lag", "max_lag": "max_lag", "top_k": "top_k", "mode": "mode", "rank_on": "rank_on"},
    "balance": {"k": "balance_k", "round_binary": "round_binary"},
    "pipeline": {"algorithms": "algorithms"},
}


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(_format(v) for v in value) + "]"
    return str(value)


def _parse(text: str):
    text = text.strip()
    if text == "none":
        return None
    if text in ("true", "false"):
        return text == "true"
    if text.startswith("[") and text.endswith("]"):
        inner = text[1:-1].strip()
        return [] if not inner else [_parse(t) for t in inner.split(",")]
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def derive_seed(master: int, stream: int) -> int:
    """Independent 32-bit seed for one pipeline stream."""
    ss = np.random.SeedSequence(entropy=int(master), spawn_key=(int(stream),))
    return int(ss.generate_state(1, np.uint32)[0])


SEED_STREAMS = {"split": 0, "balance": 1, "dt": 2, "rf": 3, "xgb": 4, "dnn": 5}


@dataclass(frozen=True)
class PipelineConfig:
    data_path: Optional[str] = None
    schema_path: Optional[str] = None
    severity_column: str = "severity"
    order_column: Optional[str] = None
    synth: Optional[SynthSpec] = None
    fraction: float = 0.8
    lag: Union[int, str] = 4
    max_lag: int = 8
    top_k: int = 17
    mode: str = "conditional"
    rank_on: str = "train"
    balance_k: int = 5
    round_binary: bool = False
    dt: TreeParams = field(default_factory=TreeParams)
    rf: ForestParams = field(default_factory=ForestParams)
    xgb: BoostParams = field(default_factory=BoostParams)
    dnn: MlpParams = field(default_factory=MlpParams)
    seed: int = 0
    algorithms: tuple[str, ...] = KINDS
    output: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        if not 0.0 < self.fraction < 1.0:
            raise ConfigurationError(f"split.fraction must lie in (0, 1), got {self.fraction}")
        if isinstance(self.lag, str):
            if self.lag != "auto":
                raise ConfigurationError(f"causality.lag must be a positive integer or 'auto', got {self.lag!r}")
        elif self.lag < 1:
            raise ConfigurationError("causality.lag must be >= 1")
        if self.max_lag < 1 or self.top_k < 1 or self.balance_k < 1:
            raise ConfigurationError("max_lag, top_k and balance k must be positive")
        if self.mode not in ("conditional", "pairwise"):
            raise ConfigurationError(f"causality.mode must be conditional or pairwise, got {self.mode!r}")
        if self.rank_on not in ("train", "balanced"):
            raise ConfigurationError(f"causality.rank_on must be train or balanced, got {self.rank_on!r}")
        bad = [a for a in self.algorithms if a not in KINDS]
        if bad or not self.algorithms:
            raise ConfigurationError(f"pipeline.algorithms must be a non-empty subset of {KINDS}, got {bad}")

    # -- serialization ------------------------------------------------------

    def items(self) -> list[tuple[str, object]]:
        """Flat ``(section.key, value)`` pairs covering every setting except the output directory."""
        out = []
        for section, keys in PLAIN_KEYS.items():
            if section == "pipeline":
                continue
            out += [(f"{section}.{key}", getattr(self, attr)) for key, attr in keys.items()]
        for kind, cls in PARAM_SECTIONS.items():
            params = getattr(self, kind)
            rename = {v: k for k, v in PARAM_ALIASES.get(kind, {}).items()}
            out += [(f"{kind}.{rename.get(f.name, f.name)}", getattr(params, f.name)) for f in fields(cls)]
        out.append(("pipeline.algorithms", self.algorithms))
        out.append(("seed", self.seed))
        if self.synth is not None:
            out += [(f"synth.{k}", v) for k, v in asdict(self.synth).items()]
        return out

    def to_text(self) -> str:
        return "".join(f"{k}={_format(v)}\n" for k, v in self.items())

    @classmethod
    def from_mapping(cls, data: dict, base_dir=None) -> "PipelineConfig":
        """Build from nested ``{section: {key: value}}`` (parsed TOML) plus top-level ``seed``."""
        data = dict(data)
        kwargs: dict = {}
        if "seed" in data:
            kwargs["seed"] = int(data.pop("seed"))
        if "output" in data:
            out = data.pop("output")
            kwargs["output"] = out.get("dir") if isinstance(out, dict) else out
        if "synth" in data:
            kwargs["synth"] = spec_from_mapping(data.pop("synth"))
        for section, values in data.items():
            if not isinstance(values, dict):
                raise ConfigurationError(f"unknown top-level key {section!r}")
            if section in PLAIN_KEYS:
                for key, value in values.items():
                    if key not in PLAIN_KEYS[section]:
                        raise ConfigurationError(f"unknown key {section}.{key}")
                    kwargs[PLAIN_KEYS[section][key]] = value
            elif section in PARAM_SECTIONS:
                aliases = PARAM_ALIASES.get(section, {})
                names = {f.name for f in fields(PARAM_SECTIONS[section])}
                params = {}
                for key, value in values.items():
                    name = aliases.get(key, key)
                    if name not in names:
                        raise ConfigurationError(f"unknown key {section}.{key}")
                    params[name] = value
                kwargs[section] = PARAM_SECTIONS[section](**params)
            else:
                raise ConfigurationError(f"unknown config section [{section}]")
        for key in ("data_path", "schema_path"):
            if kwargs.get(key) is not None and base_dir is not None:
                kwargs[key] = str((Path(base_dir) / kwargs[key]).resolve())
        if kwargs.get("output") is not None and base_dir is not None:
            kwargs["output"] = str(Path(base_dir) / kwargs["output"])
        return cls(**kwargs)

    @classmethod
    def from_toml(cls, path) -> "PipelineConfig":
        """Read a TOML config; relative paths resolve against the file's directory."""
        path = Path(path)
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        return cls.from_mapping(data, base_dir=path.parent)

    @classmethod
    def from_lines(cls, text: str) -> "PipelineConfig":
        """Parse ``section.key=value`` lines; keys outside the config (run results) are ignored."""
        nested: dict = {}
        known = {k for k, _ in cls(synth=SynthSpec()).items()}
        for line in text.splitlines():
            if not line.strip() or line.startswith("#") or "=" not in line:
                continue
            key, value = line.split("=", 1)
            if key not in known:
                continue
            value = _parse(value)
            if key == "seed":
                nested["seed"] = value
                continue
            section, name = key.split(".", 1)
            nested.setdefault(section, {})[name] = value
        return cls.from_mapping(nested)

    @classmethod
    def from_manifest(cls, path) -> "PipelineConfig":
        return cls.from_lines(Path(path).read_text(encoding="utf-8"))

    # -- derived settings ---------------------------------------------------

    def derived_seeds(self) -> dict[str, int]:
        return {name: derive_seed(self.seed, stream) for name, stream in SEED_STREAMS.items()}

    def train_config(self, kind: str) -> TrainConfig:
        return TrainConfig(kind, self.derived_seeds()[kind], getattr(self, kind))

    def with_overrides(self, **changes) -> "PipelineConfig":
        return replace(self, **changes)


@dataclass
class PipelineResult:
    config: PipelineConfig
    ranking: GcRanking
    selected: list[str]
    balance: BalanceReport
    comparisons: dict[str, ComparisonReport]
    manifest: str
    metrics_csv: str
    files: list[str] = field(default_factory=list)


def metrics_table(comparisons: dict[str, ComparisonReport]) -> str:
    """One row per (algorithm, full|reduced) with accuracy and per-class metrics."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = ["algo", "model", "n_features", "accuracy", "macro_f1"]
    for metric in ("recall", "precision", "f1"):
        header += [f"{metric}_{label}" for label in CLASS_LABELS]
    header.append("flags")
    writer.writerow(header)
    for algo, rep in comparisons.items():
        for side, ev in (("full", rep.full), ("reduced", rep.reduced)):
            m = ev.report
            row = [algo, side, len(ev.features), repr(m.accuracy), repr(m.macro_f1)]
            row += [repr(v) for v in (*m.recall, *m.precision, *m.f1)]
            row.append(";".join(m.flags))
            writer.writerow(row)
    return buf.getvalue()


def comparison_text(comparisons: dict[str, ComparisonReport]) -> str:
    lines = []
    for algo, rep in comparisons.items():
        lines.append(f"[{algo}] k={rep.k}")
        for side, ev in (("full", rep.full), ("reduced", rep.reduced)):
            norm = normalize_rows(ev.matrix)
            lines.append(f"{side}: accuracy={ev.report.accuracy:.4f} features={len(ev.features)}")
            for i, label in enumerate(CLASS_LABELS):
                cells = " ".join(f"{v:.4f}" for v in norm[i])
                lines.append(f"  {label}: {cells}  (n={int(ev.matrix.counts[i].sum())})")
        deltas = ", ".join(f"{label}={d:+.4f}" for label, d in zip(CLASS_LABELS, rep.recall_delta))
        lines.append(f"recall delta (reduced - full): {deltas}")
        lines.append("")
    return "\n".join(lines)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _load(config: PipelineConfig, facts: list) -> CrashDataset:
    if config.data_path is not None:
        schema = FeatureSchema.from_file(config.schema_path) if config.schema_path else None
        ds = load_csv(config.data_path, schema, config.severity_column, config.order_column)
        facts.append(("data.sha256", _sha256(config.data_path)))
    elif config.synth is not None:
        ds, _ = generate(config.synth)
    else:
        raise ConfigurationError("config needs either [data] path or a [synth] section")
    facts += [("data.rows", ds.n), ("data.features", ds.d), ("data.class_counts", list(ds.class_counts()))]
    return ds


def run_pipeline(config: PipelineConfig, out_dir=None) -> PipelineResult:
    """Run every stage in order and write the artifact bundle to ``out_dir``.

    A failing stage aborts the run; the manifest is still written with
    ``status=failed`` and the stage name, and :class:`StageError` is raised.
    """
    out = Path(out_dir or config.output or ".")
    out.mkdir(parents=True, exist_ok=True)
    seeds = config.derived_seeds()
    facts: list = [(f"seed.{k}", v) for k, v in seeds.items()]
    done: list[str] = []
    files: list[str] = []
    stage = "ingest"

    def emit(name: str, text: str):
        _write(out / name, text)
        files.append(name)

    try:
        ds = _load(config, facts)
        done.append(stage)

        stage = "split"
        split: SplitPair = split_train_test(ds, config.fraction, seeds["split"])
        facts += [("split.train_rows", split.train.n), ("split.test_rows", split.test.n)]
        done.append(stage)

        if config.rank_on == "balanced":
            stage = "balance"
            balanced, report = _balance(config, split, seeds, facts, emit)
            done.append(stage)

        stage = "rank"
        rank_data = split.train if config.rank_on == "train" else balanced
        require_lineage(rank_data, stage, forbid=("split:test",), need=("split:train",))
        lags = config.lag if isinstance(config.lag, str) else LagSpec.uniform(config.lag)
        ranking = rank_predictors(rank_data, lags=lags, max_lag=config.max_lag, mode=config.mode)
        facts.append(("causality.lag_used", ranking.lag.p))
        for lag, value in ranking.aic_trace:
            facts.append((f"causality.aic.{lag}", float(value)))
        ranking.to_csv(out / "ranking.csv")
        files.append("ranking.csv")
        emit("ranking.svg", charts.bar_chart(
            ranking.features, [s.G for s in ranking.scores],
            f"Conditional Granger causality on severity (lag {ranking.lag.p})", highlight=config.top_k,
        ))
        done.append(stage)

        stage = "select"
        selected = select_top_k(ranking, min(config.top_k, len(ranking)))
        facts.append(("causality.selected", ",".join(selected)))
        done.append(stage)

        if config.rank_on == "train":
            stage = "balance"
            balanced, report = _balance(config, split, seeds, facts, emit)
            done.append(stage)

        comparisons = {}
        for algo in config.algorithms:
            stage = f"train:{algo}"
            rep = compare_reduced_full(algo, split, ranking, len(selected), config.train_config(algo),
                                       balanced_train=balanced)
            comparisons[algo] = rep
            for side, ev in (("full", rep.full), ("reduced", rep.reduced)):
                title = f"{algo.upper()} {side} classifier ({len(ev.features)} features)"
                emit(f"confusion_{algo}_{side}.svg", charts.heatmap(normalize_rows(ev.matrix), title))
            done.append(stage)

        stage = "report"
        table = metrics_table(comparisons)
        emit("metrics.csv", table)
        emit("comparison.txt", comparison_text(comparisons))
        done.append(stage)
    except Exception as exc:
        manifest = _manifest(config, facts, done, status="failed", failed=(stage, exc))
        _write(out / "manifest.txt", manifest)
        logger.error("pipeline failed in stage %s: %s", stage, exc)
        raise StageError(stage, exc) from exc

    manifest = _manifest(config, facts, done, status="ok")
    _write(out / "manifest.txt", manifest)
    files.append("manifest.txt")
    return PipelineResult(config, ranking, selected, report, comparisons, manifest, table, files)


def _balance(config, split, seeds, facts, emit):
    balanced, report = balance_classes(split.train, config.balance_k, seeds["balance"],
                                       round_binary=config.round_binary)
    facts += [("balance.target_count", report.target_count), ("balance.synthetic_rows", report.n_synthetic),
              ("balance.fractional_binary_cells", report.fractional_binary_cells)]
    emit("balance_report.txt", report.to_text())
    return balanced, report


def _write(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _manifest(config, facts, done, status, failed=None) -> str:
    from . import __version__

    lines = [f"format={MANIFEST_FORMAT}", f"version={MANIFEST_VERSION}", f"crashgc={__version__}",
             f"status={status}"]
    if failed is not None:
        stage, exc = failed
        message = " ".join(str(exc).split())
        lines += [f"failed_stage={stage}", f"error={type(exc).__name__}: {message}"]
    lines.append(f"stages={','.join(done)}")
    body = config.to_text().rstrip("\n").split("\n")
    body += [f"{k}={_format(v)}" for k, v in facts]
    return "\n".join(lines + body) + "\n"
