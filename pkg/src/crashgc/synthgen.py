"""Synthetic crash sequences with planted lagged causes.

Each feature evolves independently: continuous features as a unit-variance
AR(1) process, binary features as a two-state Markov chain that flips with a
fixed probability. A latent severity score

    s_t = sum_j b_j * x_{j, t-lag} + 0.3 * s_{t-1} + noise_sd * e_t

is cut at two empirical quantiles so the three classes hit the requested
proportions exactly (to within one row of rounding).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import signal

from .errors import ConfigurationError
from .ingest import CrashDataset, Feature, FeatureSchema

BURN_IN = 100
DEFAULT_PROPORTIONS = (0.69, 0.28, 0.03)


@dataclass(frozen=True)
class SynthSpec:
    n: int = 20000
    d: int = 20
    planted: tuple[int, ...] = (0, 1, 2, 3, 4)
    coefficients: tuple[float, ...] | None = None  # defaults to 1.0 per planted feature
    lag: int = 2
    noise_sd: float = 0.5
    proportions: tuple[float, float, float] = DEFAULT_PROPORTIONS
    binary_fraction: float = 0.5
    seed: int = 0
    ar_persistence: float = 0.5
    flip_prob: float = 0.2
    score_persistence: float = 0.3

    def __post_init__(self):
        object.__setattr__(self, "planted", tuple(int(j) for j in self.planted))
        coefs = self.coefficients
        coefs = (1.0,) * len(self.planted) if coefs is None else tuple(float(b) for b in coefs)
        object.__setattr__(self, "coefficients", coefs)
        object.__setattr__(self, "proportions", tuple(float(p) for p in self.proportions))
        if len(coefs) != len(self.planted):
            raise ConfigurationError("need one coefficient per planted feature")
        if not self.planted:
            raise ConfigurationError("at least one planted feature is required")
        if len(set(self.planted)) != len(self.planted) or not all(0 <= j < self.d for j in self.planted):
            raise ConfigurationError(f"planted indices must be distinct and within 0..{self.d - 1}")
        if self.lag < 0 or self.n <= 10 * self.lag:
            raise ConfigurationError(f"need lag >= 0 and n > 10*lag (n={self.n}, lag={self.lag})")
        if len(self.proportions) != 3 or min(self.proportions) < 0 or abs(sum(self.proportions) - 1) > 1e-9:
            raise ConfigurationError(f"class proportions must be three non-negative values summing to 1")
        if not 0.0 <= self.binary_fraction <= 1.0:
            raise ConfigurationError("binary_fraction must lie in [0, 1]")

    def binary_features(self) -> list[int]:
        # interleaved so binary and continuous features alternate in index order
        bf = self.binary_fraction
        return [j for j in range(self.d) if int((j + 1) * bf) > int(j * bf)]

    def class_counts(self) -> tuple[int, int, int]:
        p0, p1, _ = self.proportions
        c0 = int(np.floor(p0 * self.n + 0.5))
        c01 = int(np.floor((p0 + p1) * self.n + 0.5))
        return c0, c01 - c0, self.n - c01


@dataclass(frozen=True)
class GroundTruth:
    planted: tuple[int, ...]
    planted_names: tuple[str, ...]
    coefficients: tuple[float, ...]
    thresholds: tuple[float, float]
    binary_features: tuple[int, ...]
    class_counts: tuple[int, int, int]
    spec: SynthSpec = field(repr=False)

    def to_text(self) -> str:
        lines = [f"{k}={v}" for k, v in asdict(self.spec).items()]
        lines += [
            f"planted_names={','.join(self.planted_names)}",
            f"thresholds={self.thresholds[0]!r},{self.thresholds[1]!r}",
            f"binary_features={','.join(map(str, self.binary_features))}",
            f"class_counts={','.join(map(str, self.class_counts))}",
        ]
        return "\n".join(lines) + "\n"


def feature_name(j: int) -> str:
    return f"x{j:02d}"


def generate(spec: SynthSpec) -> tuple[CrashDataset, GroundTruth]:
    counts = spec.class_counts()
    if min(counts) <= 0:
        raise ConfigurationError(f"proportions {spec.proportions} leave a class empty at n={spec.n}")
    rng = np.random.default_rng(spec.seed)
    total = spec.n + BURN_IN
    binary = set(spec.binary_features())
    X = np.empty((total, spec.d))
    phi = spec.ar_persistence
    for j in range(spec.d):
        if j in binary:
            start = rng.random() < 0.5
            flips = rng.random(total) < spec.flip_prob
            flips[0] = False
            X[:, j] = np.logical_xor(start, np.cumsum(flips) % 2 == 1)
        else:
            e = rng.standard_normal(total)
            e[1:] *= np.sqrt(1.0 - phi * phi)
            X[:, j] = signal.lfilter([1.0], [1.0, -phi], e)

    drive = np.zeros(total)
    for j, b in zip(spec.planted, spec.coefficients):
        drive[spec.lag :] += b * X[: total - spec.lag, j]
    drive += spec.noise_sd * rng.standard_normal(total)
    s = signal.lfilter([1.0], [1.0, -spec.score_persistence], drive)

    X, s = X[BURN_IN:], s[BURN_IN:]
    order = np.argsort(s, kind="stable")
    y = np.empty(spec.n, dtype=np.int64)
    c0, c1, _ = counts
    y[order[:c0]] = 0
    y[order[c0 : c0 + c1]] = 1
    y[order[c0 + c1 :]] = 2
    ss = s[order]
    thresholds = (0.5 * (ss[c0 - 1] + ss[c0]), 0.5 * (ss[c0 + c1 - 1] + ss[c0 + c1]))

    schema = FeatureSchema(
        tuple(Feature(feature_name(j), "binary" if j in binary else "continuous") for j in range(spec.d))
    )
    ds = CrashDataset(schema, X, y, np.arange(spec.n), lineage=(f"synth:seed={spec.seed}",))
    truth = GroundTruth(
        spec.planted,
        tuple(feature_name(j) for j in spec.planted),
        spec.coefficients,
        thresholds,
        tuple(sorted(binary)),
        counts,
        spec,
    )
    return ds, truth


def spec_from_mapping(data: dict) -> SynthSpec:
    """Build a spec from a parsed config mapping (e.g. the ``[synth]`` TOML table)."""
    known = SynthSpec.__dataclass_fields__
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigurationError(f"unknown synth keys: {unknown}")
    kwargs = dict(data)
    for key in ("planted", "coefficients", "proportions"):
        if key in kwargs and kwargs[key] is not None:
            kwargs[key] = tuple(kwargs[key])
    return SynthSpec(**kwargs)
