"""Hyperparameters for the four learners.

Defaults follow the study where it states a value (forest size, network
layout, epochs, batch size) and common practice elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Optional, Union

from ..errors import ConfigurationError

KINDS = ("dt", "rf", "xgb", "dnn")


@dataclass(frozen=True)
class TreeParams:
    max_depth: Optional[int] = None
    min_samples_split: int = 2

    def __post_init__(self):
        if self.max_depth is not None and self.max_depth < 0:
            raise ConfigurationError("max_depth must be >= 0 or None")
        if self.min_samples_split < 2:
            raise ConfigurationError("min_samples_split must be >= 2")


@dataclass(frozen=True)
class ForestParams:
    n_estimators: int = 1000
    features_per_split: Optional[int] = None  # None -> floor(sqrt(d))
    bootstrap: bool = True
    max_depth: Optional[int] = None
    min_samples_split: int = 2
    n_jobs: int = 1

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ConfigurationError("n_estimators must be positive")
        if self.features_per_split is not None and self.features_per_split < 1:
            raise ConfigurationError("features_per_split must be positive")


@dataclass(frozen=True)
class BoostParams:
    rounds: int = 100
    eta: float = 0.3
    reg_lambda: float = 1.0
    gamma: float = 0.0
    max_depth: int = 6
    min_child_hessian: float = 1.0
    base_score: float = 0.0

    def __post_init__(self):
        if self.rounds < 0 or self.max_depth < 0:
            raise ConfigurationError("rounds and max_depth must be non-negative")
        if self.reg_lambda < 0 or self.gamma < 0 or self.eta < 0:
            raise ConfigurationError("eta, lambda and gamma must be non-negative")


@dataclass(frozen=True)
class MlpParams:
    hidden_layers: tuple[int, ...] = (128, 128, 128, 64)
    epochs: int = 150
    batch_size: int = 2048
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(int(h) for h in self.hidden_layers))
        if any(h < 1 for h in self.hidden_layers):
            raise ConfigurationError("hidden layer sizes must be positive")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigurationError("epochs must be >= 0 and batch_size >= 1")


Params = Union[TreeParams, ForestParams, BoostParams, MlpParams]
PARAM_TYPES = {"dt": TreeParams, "rf": ForestParams, "xgb": BoostParams, "dnn": MlpParams}


@dataclass(frozen=True)
class TrainConfig:
    kind: str
    seed: int = 0
    params: Params = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"learner kind must be one of {KINDS}, got {self.kind!r}")
        expected = PARAM_TYPES[self.kind]
        if self.params is None:
            object.__setattr__(self, "params", expected())
        elif not isinstance(self.params, expected):
            raise ConfigurationError(f"{self.kind} needs {expected.__name__}, got {type(self.params).__name__}")

    @property
    def epochs(self) -> Optional[int]:
        return getattr(self.params, "epochs", None)

    @property
    def batch_size(self) -> Optional[int]:
        return getattr(self.params, "batch_size", None)

    def with_params(self, **changes) -> "TrainConfig":
        return replace(self, params=replace(self.params, **changes))


def params_from_mapping(kind: str, data: dict) -> Params:
    cls = PARAM_TYPES[kind]
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigurationError(f"unknown {kind} parameters: {unknown}")
    return cls(**data)
