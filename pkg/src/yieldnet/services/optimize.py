"""Search the condition space of a trained model for the highest predicted yield."""

from __future__ import annotations

import itertools
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import structlog

from yieldnet.services.dataset import Dataset, FloatArray
from yieldnet.services.harness import RegressionModel

logger = structlog.get_logger(__name__)

CHUNK_SIZE = 4096


@dataclass(frozen=True, slots=True)
class ConditionOptimum:
    conditions: tuple[float, ...]
    predicted: float
    top: tuple[tuple[tuple[float, ...], float], ...]
    evaluated: int


def bounds_from_dataset(ds: Dataset) -> list[tuple[float, float]]:
    """Per-feature (min, max) of the data; predictions outside it are extrapolation."""
    return [(float(column.min()), float(column.max())) for column in ds.features.T]


def condition_grid(bounds: Sequence[tuple[float, float]], points_per_axis: int) -> FloatArray:
    if points_per_axis < 1:
        raise ValueError(f"points_per_axis must be >= 1, got {points_per_axis}")
    axes = []
    for low, high in bounds:
        if not (np.isfinite(low) and np.isfinite(high)) or low > high:
            raise ValueError(f"invalid bounds ({low}, {high})")
        axes.append(np.linspace(low, high, points_per_axis) if points_per_axis > 1 else [low])
    return np.array(list(itertools.product(*axes)), dtype=np.float64)


def optimize_conditions(
    model: RegressionModel,
    bounds: Sequence[tuple[float, float]],
    points_per_axis: int = 9,
    top: int = 5,
) -> ConditionOptimum:
    """Evaluate ``model`` on a regular grid; ties keep the earlier grid point."""
    if len(bounds) != model.normalizer.dimension:
        raise ValueError(
            f"expected bounds for {model.normalizer.dimension} features, got {len(bounds)}"
        )
    grid = condition_grid(bounds, points_per_axis)
    predicted = np.concatenate(
        [model.predict_many(grid[start : start + CHUNK_SIZE]) for start in range(0, len(grid), CHUNK_SIZE)]
    )
    order = np.argsort(-predicted, kind="stable")[: max(top, 1)]
    ranked = tuple(
        (tuple(float(v) for v in grid[index]), float(predicted[index])) for index in order
    )
    best_conditions, best_yield = ranked[0]
    logger.info("optimize.finished", evaluated=len(grid), best=best_yield)
    return ConditionOptimum(
        conditions=best_conditions,
        predicted=best_yield,
        top=ranked,
        evaluated=int(len(grid)),
    )
