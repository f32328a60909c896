"""Scoring indicators: RMS error and accuracy under a tolerance."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike

from yieldnet.models import ToleranceRule
from yieldnet.services.dataset import FloatArray

DEFAULT_TOLERANCE = 0.30


class MetricsError(ValueError):
    """Raised for empty, mismatched or non-finite score inputs."""


class ToleranceRuleError(MetricsError):
    """Raised when the chosen tolerance rule cannot judge the data."""


def _pair(actual: ArrayLike, predicted: ArrayLike) -> tuple[FloatArray, FloatArray]:
    a = np.asarray(actual, dtype=np.float64).ravel()
    p = np.asarray(predicted, dtype=np.float64).ravel()
    if a.size == 0:
        raise MetricsError("cannot score an empty list")
    if a.shape != p.shape:
        raise MetricsError(f"length mismatch: {a.size} actual vs {p.size} predicted")
    if not (np.isfinite(a).all() and np.isfinite(p).all()):
        raise MetricsError("actual and predicted values must be finite")
    return a, p


def rms_error(actual: ArrayLike, predicted: ArrayLike) -> float:
    a, p = _pair(actual, predicted)
    return float(np.sqrt(np.mean((a - p) ** 2)))


def check_tolerance_rule(actual: ArrayLike, rule: ToleranceRule) -> None:
    """Reject actual values the rule cannot score, before any model is trained on them."""
    if rule is ToleranceRule.RELATIVE and (np.asarray(actual, dtype=np.float64) == 0).any():
        raise ToleranceRuleError(
            "relative tolerance is undefined for zero actual values; use the 'range' rule"
        )


def tolerance_accuracy(
    actual: ArrayLike,
    predicted: ArrayLike,
    tolerance: float = DEFAULT_TOLERANCE,
    rule: ToleranceRule = ToleranceRule.RELATIVE,
    target_range: float | None = None,
) -> float:
    """Fraction of predictions whose absolute error is within the tolerance band.

    ``relative`` bands are ``tolerance * |actual|``; ``range`` bands are
    ``tolerance * target_range`` where the range comes from the training targets.
    """
    a, p = _pair(actual, predicted)
    if not tolerance > 0:
        raise MetricsError(f"tolerance must be positive, got {tolerance}")
    error = np.abs(p - a)
    check_tolerance_rule(a, rule)
    if rule is ToleranceRule.RELATIVE:
        band = tolerance * np.abs(a)
    else:
        if target_range is None or not np.isfinite(target_range) or target_range < 0:
            raise ToleranceRuleError("the 'range' rule needs a finite training target range")
        band = np.full(a.shape, tolerance * target_range)
    return int(np.count_nonzero(error <= band)) / a.size


@dataclass(frozen=True, slots=True)
class Evaluation:
    rms_error: float
    accuracy: float
    tolerance: float
    rule: ToleranceRule
    n: int
    residuals: tuple[tuple[float, float, float], ...] = field(default=())

    @property
    def actual(self) -> list[float]:
        return [row[0] for row in self.residuals]

    @property
    def predicted(self) -> list[float]:
        return [row[1] for row in self.residuals]


def evaluate(
    actual: Sequence[float] | FloatArray,
    predicted: Sequence[float] | FloatArray,
    tolerance: float = DEFAULT_TOLERANCE,
    rule: ToleranceRule = ToleranceRule.RELATIVE,
    target_range: float | None = None,
) -> Evaluation:
    """Bundle both indicators with per-sample ``(actual, predicted, actual - predicted)`` rows."""
    a, p = _pair(actual, predicted)
    return Evaluation(
        rms_error=rms_error(a, p),
        accuracy=tolerance_accuracy(a, p, tolerance, rule, target_range),
        tolerance=tolerance,
        rule=rule,
        n=int(a.size),
        residuals=tuple(
            (float(x), float(y), float(x - y)) for x, y in zip(a, p)
        ),
    )
