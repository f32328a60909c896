"""Core data and configuration models used throughout yieldnet."""

from __future__ import annotations

import math
from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

MIN_MLFN_NODES = 2
MAX_MLFN_NODES = 25
SEED_FIELD = Field(default=0, ge=0, le=2**64 - 1)


class ModelKind(str, Enum):
    GRNN = "GRNN"
    SVR = "SVR"
    MLFN = "MLFN"


class ToleranceRule(str, Enum):
    """How a prediction is judged "good" under a tolerance."""

    RELATIVE = "relative"  # |predicted - actual| <= tol * |actual|
    RANGE = "range"  # |predicted - actual| <= tol * (training target range)


class Conditions(BaseModel):
    """The four reaction conditions a model is queried with."""

    model_config = ConfigDict(frozen=True)

    time_h: float = Field(ge=0, allow_inf_nan=False)
    temperature_c: float = Field(allow_inf_nan=False)
    enzyme_mg: float = Field(ge=0, allow_inf_nan=False)
    molar_ratio: float = Field(gt=0, allow_inf_nan=False)

    def conditions(self) -> tuple[float, float, float, float]:
        return (self.time_h, self.temperature_c, self.enzyme_mg, self.molar_ratio)


class Sample(Conditions):
    """One reaction record: four conditions and the isolated yield."""

    yield_pct: float = Field(allow_inf_nan=False)


class SplitSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    train_fraction: float = Field(default=0.65, gt=0, lt=1)
    seed: int = SEED_FIELD


class TrainConfig(BaseModel):
    """Backpropagation schedule for MLFN training."""

    model_config = ConfigDict(frozen=True)

    learning_rate: float = Field(default=0.1, gt=0, allow_inf_nan=False)
    momentum: float = Field(default=0.9, ge=0, lt=1)
    max_epochs: int = Field(default=5000, ge=1)
    patience: int = Field(default=200, ge=1)
    seed: int = SEED_FIELD
    init_half_width: float = Field(default=0.5, gt=0, allow_inf_nan=False)


class SvrConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    C: float = Field(default=1.0, gt=0, allow_inf_nan=False)
    epsilon: float = Field(default=0.1, ge=0, allow_inf_nan=False)
    gamma: float = Field(default=0.1, gt=0, allow_inf_nan=False)
    tol: float = Field(default=1e-3, gt=0, allow_inf_nan=False)
    max_passes: int = Field(default=100, ge=1)


class SvrGrid(BaseModel):
    """Cross-validation grid for SVR hyperparameters."""

    model_config = ConfigDict(frozen=True)

    C: tuple[float, ...] = (0.1, 1.0, 10.0, 100.0)
    epsilon: tuple[float, ...] = (0.01, 0.1, 1.0)
    gamma: tuple[float, ...] = (0.01, 0.1, 1.0, 10.0)
    folds: int = Field(default=5, ge=2)

    @field_validator("C", "epsilon", "gamma")
    @classmethod
    def _nonempty_finite(cls, values: tuple[float, ...]) -> tuple[float, ...]:
        if not values:
            raise ValueError("grid must not be empty")
        if not all(math.isfinite(value) and value >= 0 for value in values):
            raise ValueError("grid values must be finite and nonnegative")
        return values

    @field_validator("C", "gamma")
    @classmethod
    def _positive(cls, values: tuple[float, ...]) -> tuple[float, ...]:
        if not all(value > 0 for value in values):
            raise ValueError("C and gamma grid values must be positive")
        return values


class CandidateSpec(BaseModel):
    """One row of a best-net search: a model family plus its settings."""

    model_config = ConfigDict(frozen=True)

    kind: ModelKind
    mlfn_nodes: int | None = Field(default=None, ge=MIN_MLFN_NODES, le=MAX_MLFN_NODES)
    label: str | None = None
    sigma: float | None = Field(default=None, gt=0, allow_inf_nan=False)
    sigma_grid: tuple[float, ...] | None = None
    svr: SvrConfig | None = None
    svr_grid: SvrGrid = Field(default_factory=SvrGrid)
    train: TrainConfig = Field(default_factory=TrainConfig)
    trials: int = Field(default=1, ge=1)
    seeds: tuple[int, ...] | None = None

    @model_validator(mode="after")
    def _nodes_match_kind(self) -> "CandidateSpec":
        if (self.kind is ModelKind.MLFN) != (self.mlfn_nodes is not None):
            raise ValueError("mlfn_nodes must be set exactly when kind is MLFN")
        if self.seeds is not None and len(self.seeds) != self.trials:
            raise ValueError("seeds must list one seed per trial")
        return self

    @property
    def candidate_id(self) -> str:
        if self.label:
            return self.label
        if self.kind is ModelKind.MLFN:
            return f"MLFN ({self.mlfn_nodes} Nodes)"
        return self.kind.value
