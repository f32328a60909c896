"""General regression neural network: a Gaussian-kernel weighted average of stored targets.

The pattern layer holds the z-scored training inputs; the summation layer forms the two sums
of the Nadaraya-Watson ratio. The Parzen normalising constant cancels in that ratio and is not
stored.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import structlog
from numpy.typing import ArrayLike

from yieldnet.models import ModelKind
from yieldnet.services.dataset import Dataset, DatasetError, FloatArray, Normalizer, fit_normalizer

logger = structlog.get_logger(__name__)

DEFAULT_BANDWIDTH_GRID: tuple[float, ...] = tuple(float(v) for v in np.logspace(-2, 1, 25))


def grnn_distance(x: ArrayLike, pattern: ArrayLike) -> float:
    """Squared Euclidean distance between a query and one stored pattern."""
    a = np.asarray(x, dtype=np.float64)
    b = np.asarray(pattern, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    return float(np.dot(diff, diff))


def _squared_distances(patterns: FloatArray, queries: FloatArray) -> FloatArray:
    """(q, p) matrix of squared distances, accumulated feature by feature."""
    out = np.zeros((queries.shape[0], patterns.shape[0]))
    for k in range(patterns.shape[1]):
        out += (queries[:, k, None] - patterns[None, :, k]) ** 2
    return out


def _kernel_estimate(distances: FloatArray, targets: FloatArray, sigma: float) -> FloatArray:
    """Row-wise weighted average; distances may contain +inf for excluded patterns."""
    shifted = distances - distances.min(axis=1, keepdims=True)
    weights = np.exp(-shifted / (2.0 * sigma * sigma))
    totals = weights.sum(axis=1)
    estimates = np.empty(distances.shape[0])
    ok = totals > 0
    estimates[ok] = (weights[ok] @ targets) / totals[ok]
    if not ok.all():
        # unreachable after the shift unless every distance is infinite
        nearest = np.argmin(distances[~ok], axis=1)
        estimates[~ok] = targets[nearest]
    return np.clip(estimates, targets.min(), targets.max())


@dataclass(frozen=True, slots=True)
class GrnnModel:
    patterns: FloatArray
    targets: FloatArray
    sigma: float
    normalizer: Normalizer

    kind = ModelKind.GRNN

    def __post_init__(self) -> None:
        patterns = np.array(self.patterns, dtype=np.float64, ndmin=2)
        targets = np.array(self.targets, dtype=np.float64).ravel()
        if patterns.shape[0] < 1 or patterns.shape[0] != targets.shape[0]:
            raise ValueError("GRNN needs at least one pattern and one target per pattern")
        if patterns.shape[1] != self.normalizer.dimension:
            raise ValueError("pattern dimension does not match the normalizer")
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError(f"bandwidth must be positive and finite, got {self.sigma}")
        if not (np.isfinite(patterns).all() and np.isfinite(targets).all()):
            raise ValueError("patterns and targets must be finite")
        patterns.setflags(write=False)
        targets.setflags(write=False)
        object.__setattr__(self, "patterns", patterns)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def pattern_count(self) -> int:
        return int(self.targets.shape[0])

    def predict(self, x: ArrayLike) -> float:
        return grnn_predict(self, x)

    def predict_many(self, features: ArrayLike) -> FloatArray:
        queries = self.normalizer.transform(np.atleast_2d(np.asarray(features, dtype=np.float64)))
        return _kernel_estimate(_squared_distances(self.patterns, queries), self.targets, self.sigma)


def grnn_predict(model: GrnnModel, x: ArrayLike) -> float:
    """Estimate the target at one raw (unnormalised) condition vector."""
    query = np.asarray(x, dtype=np.float64)
    if query.shape != (model.normalizer.dimension,):
        raise ValueError(
            f"expected a vector of {model.normalizer.dimension} features, got shape {query.shape}"
        )
    return float(model.predict_many(query[None, :])[0])


def _loo_rmse(distances: FloatArray, targets: FloatArray, sigma: float) -> float:
    estimates = _kernel_estimate(distances, targets, sigma)
    residuals = targets - estimates
    return float(np.sqrt(np.mean(residuals**2)))


def select_bandwidth(train: Dataset, grid: Sequence[float] = DEFAULT_BANDWIDTH_GRID) -> float:
    """Pick the grid bandwidth with the lowest leave-one-out RMSE; ties go to the smaller one."""
    if not grid:
        raise ValueError("bandwidth grid must not be empty")
    if any(not (np.isfinite(s) and s > 0) for s in grid):
        raise ValueError("bandwidth grid values must be positive and finite")
    if len(train) < 2:
        raise DatasetError("bandwidth selection needs at least 2 training samples")
    if np.all(train.features == train.features[0]):
        raise DatasetError("all training inputs are identical; bandwidth is undetermined")
    normalizer = fit_normalizer(train)
    patterns = normalizer.transform(train.features)
    distances = _squared_distances(patterns, patterns)
    np.fill_diagonal(distances, np.inf)

    best_sigma, best_score = 0.0, np.inf
    for sigma in sorted(float(s) for s in grid):
        score = _loo_rmse(distances, train.targets, sigma)
        logger.debug("grnn.bandwidth_scored", sigma=sigma, loo_rmse=score)
        if score < best_score:
            best_sigma, best_score = sigma, score
    logger.info("grnn.bandwidth_selected", sigma=best_sigma, loo_rmse=best_score)
    return best_sigma


def fit_grnn(
    train: Dataset,
    sigma: float | None = None,
    grid: Sequence[float] | None = None,
) -> GrnnModel:
    """Store the training patterns; choose the bandwidth by leave-one-out when not given."""
    normalizer = fit_normalizer(train)
    if sigma is None:
        sigma = select_bandwidth(train, grid or DEFAULT_BANDWIDTH_GRID)
    return GrnnModel(
        patterns=normalizer.transform(train.features),
        targets=train.targets,
        sigma=sigma,
        normalizer=normalizer,
    )
