"""Epsilon-support vector regression with an RBF kernel, trained by SMO.

The dual is solved in the 2n-variable form used by LIBSVM: variables ``a`` (first half, sign +1)
and ``a*`` (second half, sign -1), each boxed in [0, C], with ``sum(a) == sum(a*)``. The
expansion coefficients are ``beta = a - a*`` and predictions are ``sum(beta_j k(x, x_j)) + b``.
"""

from __future__ import annotations

import itertools
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import structlog
from numpy.typing import ArrayLike, NDArray

from yieldnet.models import ModelKind, SvrConfig, SvrGrid
from yieldnet.services.dataset import Dataset, DatasetError, FloatArray, Normalizer, fit_normalizer

logger = structlog.get_logger(__name__)

GRAM_CACHE_LIMIT = 2000
SUPPORT_THRESHOLD = 1e-12
TAU = 1e-12


def rbf_kernel(x: ArrayLike, z: ArrayLike, gamma: float) -> float:
    """``exp(-gamma * ||x - z||^2)``; symmetric in its arguments bit for bit."""
    a = np.asarray(x, dtype=np.float64)
    b = np.asarray(z, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    return float(np.exp(-gamma * np.dot(diff, diff)))


def rbf_matrix(rows: FloatArray, cols: FloatArray, gamma: float) -> FloatArray:
    if rows.shape[1] != cols.shape[1]:
        raise ValueError(f"dimension mismatch: {rows.shape[1]} vs {cols.shape[1]}")
    squared = np.zeros((rows.shape[0], cols.shape[0]))
    for k in range(rows.shape[1]):
        squared += (rows[:, k, None] - cols[None, :, k]) ** 2
    return np.exp(-gamma * squared)


def svr_dual_objective(
    gram: FloatArray, targets: FloatArray, beta: FloatArray, epsilon: float
) -> float:
    """``1/2 beta' K beta + epsilon * sum|beta| - y' beta`` (to be minimised)."""
    return float(0.5 * beta @ gram @ beta + epsilon * np.abs(beta).sum() - targets @ beta)


@dataclass(frozen=True, slots=True)
class SvrModel:
    support_vectors: FloatArray
    dual_coef: FloatArray
    bias: float
    config: SvrConfig
    normalizer: Normalizer
    support_indices: tuple[int, ...] = ()
    converged: bool = True
    iterations: int = 0
    objective: float = 0.0

    kind = ModelKind.SVR

    def __post_init__(self) -> None:
        vectors = np.array(self.support_vectors, dtype=np.float64).reshape(
            -1, self.normalizer.dimension
        )
        coef = np.array(self.dual_coef, dtype=np.float64).ravel()
        if vectors.shape[0] != coef.shape[0]:
            raise ValueError("one dual coefficient per support vector")
        if not (np.isfinite(vectors).all() and np.isfinite(coef).all() and np.isfinite(self.bias)):
            raise ValueError("SVR parameters must be finite")
        if (np.abs(coef) > self.config.C + 1e-12).any():
            raise ValueError("dual coefficients must lie in [-C, C]")
        vectors.setflags(write=False)
        coef.setflags(write=False)
        object.__setattr__(self, "support_vectors", vectors)
        object.__setattr__(self, "dual_coef", coef)
        object.__setattr__(self, "bias", float(self.bias))

    @property
    def support_count(self) -> int:
        return int(self.dual_coef.shape[0])

    def predict(self, x: ArrayLike) -> float:
        return svr_predict(self, x)

    def predict_many(self, features: ArrayLike) -> FloatArray:
        queries = self.normalizer.transform(np.atleast_2d(np.asarray(features, dtype=np.float64)))
        if self.support_count == 0:
            return np.full(queries.shape[0], self.bias)
        return rbf_matrix(queries, self.support_vectors, self.config.gamma) @ self.dual_coef + self.bias


def svr_predict(model: SvrModel, x: ArrayLike) -> float:
    query = np.asarray(x, dtype=np.float64)
    if query.shape != (model.normalizer.dimension,):
        raise ValueError(
            f"expected a vector of {model.normalizer.dimension} features, got shape {query.shape}"
        )
    return float(model.predict_many(query[None, :])[0])


class _KernelRows:
    """Rows of the n x n kernel matrix: cached in full for small n, computed on demand otherwise."""

    def __init__(self, inputs: FloatArray, gamma: float) -> None:
        self._inputs = inputs
        self._gamma = gamma
        n = inputs.shape[0]
        self._full = rbf_matrix(inputs, inputs, gamma) if n <= GRAM_CACHE_LIMIT else None

    @property
    def full(self) -> FloatArray | None:
        return self._full

    def row(self, index: int) -> FloatArray:
        if self._full is not None:
            return self._full[index]
        return rbf_matrix(self._inputs[index : index + 1], self._inputs, self._gamma)[0]

    def diagonal(self) -> FloatArray:
        # exp(0) for the RBF kernel
        return np.ones(self._inputs.shape[0])


@dataclass(slots=True)
class _SmoState:
    alpha: FloatArray  # length 2n
    grad: FloatArray  # gradient of the 2n-variable dual
    signs: FloatArray  # +1 for the first half, -1 for the second


def _violations(state: _SmoState, C: float) -> tuple[FloatArray, NDArray[np.bool_], NDArray[np.bool_]]:
    """Scores ``-y_t G_t`` and membership of the up/low index sets."""
    below_c = state.alpha < C
    above_0 = state.alpha > 0
    positive = state.signs > 0
    up = (positive & below_c) | (~positive & above_0)
    low = (positive & above_0) | (~positive & below_c)
    return -state.signs * state.grad, up, low


def _bias(scores: FloatArray, up: NDArray[np.bool_], low: NDArray[np.bool_]) -> float:
    if not (up.any() or low.any()):
        raise ValueError("no multiplier can move; the box constraint C must be positive")
    free = up & low
    if free.any():
        return float(scores[free].mean())
    upper = scores[low].min() if low.any() else scores[up].max()
    lower = scores[up].max() if up.any() else scores[low].min()
    return float((upper + lower) / 2.0)


def svr_train(train: Dataset, cfg: SvrConfig | None = None) -> SvrModel:
    """Solve the epsilon-SVR dual with pairwise (SMO) updates.

    Stops when the maximal KKT violation gap drops below ``cfg.tol`` or after
    ``cfg.max_passes * 2n`` pair updates; the latter returns ``converged=False``.
    """
    cfg = cfg or SvrConfig()
    n = len(train)
    if n == 0:
        raise DatasetError("cannot train an SVR on an empty dataset")
    normalizer = fit_normalizer(train) if n > 1 else _identity_like(train)
    inputs = normalizer.transform(train.features)
    targets = train.targets
    kernel = _KernelRows(inputs, cfg.gamma)
    diag = np.concatenate([kernel.diagonal(), kernel.diagonal()])
    C = cfg.C

    signs = np.concatenate([np.ones(n), -np.ones(n)])
    state = _SmoState(
        alpha=np.zeros(2 * n),
        grad=np.concatenate([cfg.epsilon - targets, cfg.epsilon + targets]),
        signs=signs,
    )
    max_iterations = cfg.max_passes * 2 * n
    converged = False
    iteration = 0
    log = logger.bind(C=C, epsilon=cfg.epsilon, gamma=cfg.gamma, n=n)

    while True:
        scores, up, low = _violations(state, C)
        if not up.any() or not low.any():
            converged = True
            break
        up_scores = np.where(up, scores, -np.inf)
        i = int(np.argmax(up_scores))
        m_up = up_scores[i]
        m_low = float(np.where(low, scores, np.inf).min())
        if m_up - m_low < cfg.tol:
            converged = True
            break
        if iteration >= max_iterations:
            break

        row_i = kernel.row(i % n)
        row_i2 = np.concatenate([row_i, row_i])
        # second index: largest guaranteed decrease of the dual among violating partners
        gap = m_up - scores
        curvature = diag[i] + diag - 2.0 * row_i2
        curvature = np.where(curvature > 0, curvature, TAU)
        gain = np.where(low & (gap > 0), -(gap * gap) / curvature, np.inf)
        j = int(np.argmin(gain))

        _update_pair(state, i, j, row_i2, kernel, n, C, diag)
        iteration += 1

    scores, up, low = _violations(state, C)
    bias = _bias(scores, up, low)
    beta = state.alpha[:n] - state.alpha[n:]
    keep = np.flatnonzero(np.abs(beta) > SUPPORT_THRESHOLD)
    gram = kernel.full
    dual = svr_dual_objective(gram, targets, beta, cfg.epsilon) if gram is not None else float("nan")
    if converged:
        log.info("svr.converged", iterations=iteration, support=len(keep), objective=dual)
    else:
        log.warning("svr.not_converged", iterations=iteration, support=len(keep))
    return SvrModel(
        support_vectors=inputs[keep],
        dual_coef=beta[keep],
        bias=bias,
        config=cfg,
        normalizer=normalizer,
        support_indices=tuple(int(k) for k in keep),
        converged=converged,
        iterations=iteration,
        objective=dual,
    )


def _identity_like(train: Dataset) -> Normalizer:
    """A single training point carries no spread; centre on it with unit scale."""
    return Normalizer(
        mean=train.features[0],
        std=np.ones(train.dimension),
        feature_names=train.feature_names,
    )


def _update_pair(
    state: _SmoState,
    i: int,
    j: int,
    row_i2: FloatArray,
    kernel: _KernelRows,
    n: int,
    C: float,
    diag: FloatArray,
) -> None:
    """Analytic two-variable step with box clipping, then the gradient update."""
    alpha, grad, y = state.alpha, state.grad, state.signs
    row_j = kernel.row(j % n)
    row_j2 = np.concatenate([row_j, row_j])
    q_i = y[i] * y * row_i2
    q_j = y[j] * y * row_j2
    old_i, old_j = alpha[i], alpha[j]

    if y[i] != y[j]:
        quad = diag[i] + diag[j] + 2.0 * q_i[j]
        quad = quad if quad > 0 else TAU
        delta = (-grad[i] - grad[j]) / quad
        diff = alpha[i] - alpha[j]
        alpha[i] += delta
        alpha[j] += delta
        if diff > 0:
            if alpha[j] < 0:
                alpha[j] = 0.0
                alpha[i] = diff
        elif alpha[i] < 0:
            alpha[i] = 0.0
            alpha[j] = -diff
        if diff > 0:
            if alpha[i] > C:
                alpha[i] = C
                alpha[j] = C - diff
        elif alpha[j] > C:
            alpha[j] = C
            alpha[i] = C + diff
    else:
        quad = diag[i] + diag[j] - 2.0 * q_i[j]
        quad = quad if quad > 0 else TAU
        delta = (grad[i] - grad[j]) / quad
        total = alpha[i] + alpha[j]
        alpha[i] -= delta
        alpha[j] += delta
        if total > C:
            if alpha[i] > C:
                alpha[i] = C
                alpha[j] = total - C
        elif alpha[j] < 0:
            alpha[j] = 0.0
            alpha[i] = total
        if total > C:
            if alpha[j] > C:
                alpha[j] = C
                alpha[i] = total - C
        elif alpha[i] < 0:
            alpha[i] = 0.0
            alpha[j] = total

    grad += q_i * (alpha[i] - old_i) + q_j * (alpha[j] - old_j)


def _fold_assignment(n: int, folds: int, seed: int) -> NDArray[np.int64]:
    order = np.random.default_rng(seed).permutation(n)
    assignment = np.empty(n, dtype=np.int64)
    assignment[order] = np.arange(n) % folds
    return assignment


def cross_validate(train: Dataset, cfg: SvrConfig, folds: int, seed: int = 0) -> float:
    """Mean held-out RMSE over ``folds`` seeded folds."""
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if len(train) < folds:
        raise DatasetError(f"{len(train)} samples are too few for {folds}-fold cross validation")
    assignment = _fold_assignment(len(train), folds, seed)
    errors = []
    for fold in range(folds):
        held = np.flatnonzero(assignment == fold)
        kept = np.flatnonzero(assignment != fold)
        model = svr_train(train.subset(kept, f"fold{fold}-train"), cfg)
        residuals = train.targets[held] - model.predict_many(train.features[held])
        errors.append(float(np.sqrt(np.mean(residuals**2))))
    return float(np.mean(errors))


def svr_grid_search(
    train: Dataset,
    C_grid: Sequence[float] = SvrGrid().C,
    eps_grid: Sequence[float] = SvrGrid().epsilon,
    gamma_grid: Sequence[float] = SvrGrid().gamma,
    folds: int = 5,
    seed: int = 0,
    base: SvrConfig | None = None,
) -> SvrConfig:
    """Exhaustive (C, epsilon, gamma) search by k-fold RMSE; ties go to the smallest triple."""
    if not (C_grid and eps_grid and gamma_grid):
        raise ValueError("every grid must contain at least one value")
    base = base or SvrConfig()
    # model_copy skips validation
    cells = [
        SvrConfig.model_validate({**base.model_dump(), "C": C, "epsilon": eps, "gamma": gamma})
        for C, eps, gamma in itertools.product(sorted(C_grid), sorted(eps_grid), sorted(gamma_grid))
    ]
    best: SvrConfig | None = None
    best_score = np.inf
    for cfg in cells:
        score = cross_validate(train, cfg, folds, seed)
        logger.debug("svr.grid_cell", C=cfg.C, epsilon=cfg.epsilon, gamma=cfg.gamma, rmse=score)
        if score < best_score:
            best, best_score = cfg, score
    assert best is not None
    logger.info(
        "svr.grid_selected", C=best.C, epsilon=best.epsilon, gamma=best.gamma, rmse=best_score
    )
    return best
