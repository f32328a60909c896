"""Multilayer feed-forward network with sigmoid neurons trained by backpropagation.

Every non-input neuron i computes its potential from a threshold plus the weighted outputs of
the whole previous layer and emits ``sigmoid(potential)``. Training minimises
``E = sum 1/2 (target - output)^2`` over the training cases, in scaled target units.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
import structlog
from numpy.typing import ArrayLike

from yieldnet.models import ModelKind, TrainConfig
from yieldnet.services.dataset import Dataset, DatasetError, FloatArray, Normalizer, fit_normalizer

logger = structlog.get_logger(__name__)

IMPROVEMENT_THRESHOLD = 1e-10
SCALED_LOW, SCALED_HIGH = 0.1, 0.9


class TrainingDivergedError(RuntimeError):
    """Raised when the objective stops being finite during training."""

    def __init__(self, epoch: int) -> None:
        super().__init__(
            f"training diverged at epoch {epoch}: objective is not finite "
            "(try a smaller learning rate)"
        )
        self.epoch = epoch


def sigmoid(zeta: ArrayLike) -> FloatArray:
    """Logistic transfer ``1 / (1 + exp(-zeta))``, evaluated without overflow."""
    z = np.asarray(zeta, dtype=np.float64)
    out = np.empty_like(z)
    positive = z >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-z[positive]))
    exp_z = np.exp(z[~positive])
    out[~positive] = exp_z / (1.0 + exp_z)
    return out


@dataclass(frozen=True, slots=True)
class MlfnTopology:
    """Layer sizes ``[d_in, h_1, ..., d_out]``; each layer is fully connected to the previous one."""

    layer_sizes: tuple[int, ...]

    def __post_init__(self) -> None:
        sizes = tuple(int(size) for size in self.layer_sizes)
        if len(sizes) < 2 or any(size < 1 for size in sizes):
            raise ValueError(f"invalid layer sizes {self.layer_sizes}: need >= 2 layers of size >= 1")
        object.__setattr__(self, "layer_sizes", sizes)

    @classmethod
    def single_hidden(cls, hidden: int, inputs: int = 4) -> "MlfnTopology":
        return cls((inputs, hidden, 1))

    @property
    def inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def outputs(self) -> int:
        return self.layer_sizes[-1]

    @property
    def weight_shapes(self) -> list[tuple[int, int]]:
        return [(out, inp) for inp, out in zip(self.layer_sizes[:-1], self.layer_sizes[1:])]

    @property
    def weight_count(self) -> int:
        return sum(out * inp for out, inp in self.weight_shapes)

    @property
    def threshold_count(self) -> int:
        return sum(self.layer_sizes[1:])

    @property
    def parameter_count(self) -> int:
        return self.weight_count + self.threshold_count

    def label(self) -> str:
        return "-".join(str(size) for size in self.layer_sizes)


@dataclass(frozen=True, slots=True)
class TargetScaler:
    """Affine map ``scaled = slope * y + offset`` taking training yields into [0.1, 0.9]."""

    slope: float
    offset: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.slope) and np.isfinite(self.offset)) or self.slope == 0:
            raise ValueError("target scaler needs a finite nonzero slope and finite offset")

    @classmethod
    def fit(cls, targets: ArrayLike) -> "TargetScaler":
        values = np.asarray(targets, dtype=np.float64)
        low, high = float(values.min()), float(values.max())
        if high == low:
            # constant targets sit in the middle of the sigmoid range
            return cls(slope=1.0, offset=0.5 - low)
        slope = (SCALED_HIGH - SCALED_LOW) / (high - low)
        return cls(slope=slope, offset=SCALED_LOW - slope * low)

    def scale(self, values: ArrayLike) -> FloatArray:
        return np.asarray(values, dtype=np.float64) * self.slope + self.offset

    def unscale(self, values: ArrayLike) -> FloatArray:
        return (np.asarray(values, dtype=np.float64) - self.offset) / self.slope


@dataclass(frozen=True, slots=True)
class MlfnModel:
    """Weights are stored per layer as (outputs x inputs) matrices next to their thresholds."""

    topology: MlfnTopology
    weights: tuple[FloatArray, ...]
    thresholds: tuple[FloatArray, ...]
    normalizer: Normalizer
    target_scaler: TargetScaler

    kind = ModelKind.MLFN

    def __post_init__(self) -> None:
        shapes = self.topology.weight_shapes
        if len(self.weights) != len(shapes) or len(self.thresholds) != len(shapes):
            raise ValueError("one weight matrix and one threshold vector per layer transition")
        weights, thresholds = [], []
        for (rows, cols), w, t in zip(shapes, self.weights, self.thresholds):
            w_arr = np.array(w, dtype=np.float64)
            t_arr = np.array(t, dtype=np.float64)
            if w_arr.shape != (rows, cols) or t_arr.shape != (rows,):
                raise ValueError(
                    f"expected weights {(rows, cols)} and thresholds {(rows,)}, "
                    f"got {w_arr.shape} and {t_arr.shape}"
                )
            if not (np.isfinite(w_arr).all() and np.isfinite(t_arr).all()):
                raise ValueError("network parameters must be finite")
            w_arr.setflags(write=False)
            t_arr.setflags(write=False)
            weights.append(w_arr)
            thresholds.append(t_arr)
        if self.normalizer.dimension != self.topology.inputs:
            raise ValueError("normalizer dimension does not match the input layer")
        object.__setattr__(self, "weights", tuple(weights))
        object.__setattr__(self, "thresholds", tuple(thresholds))

    def parameter_vector(self) -> FloatArray:
        """All weights followed by all thresholds, layer by layer."""
        return np.concatenate(
            [w.ravel() for w in self.weights] + [t.ravel() for t in self.thresholds]
        )

    def with_parameters(self, vector: ArrayLike) -> "MlfnModel":
        weights, thresholds = _unpack(self.topology, np.asarray(vector, dtype=np.float64))
        return MlfnModel(self.topology, weights, thresholds, self.normalizer, self.target_scaler)

    def predict(self, x: ArrayLike) -> float:
        output, _ = forward(self, x)
        return output

    def predict_many(self, features: ArrayLike) -> FloatArray:
        inputs = self.normalizer.transform(np.atleast_2d(np.asarray(features, dtype=np.float64)))
        raw = _propagate(self.weights, self.thresholds, inputs)[-1][:, 0]
        return self.target_scaler.unscale(raw)


def _unpack(
    topology: MlfnTopology, vector: FloatArray
) -> tuple[tuple[FloatArray, ...], tuple[FloatArray, ...]]:
    if vector.shape != (topology.parameter_count,):
        raise ValueError(
            f"expected {topology.parameter_count} parameters, got {vector.shape}"
        )
    weights, thresholds, cursor = [], [], 0
    for rows, cols in topology.weight_shapes:
        weights.append(vector[cursor : cursor + rows * cols].reshape(rows, cols))
        cursor += rows * cols
    for rows, _ in topology.weight_shapes:
        thresholds.append(vector[cursor : cursor + rows])
        cursor += rows
    return tuple(weights), tuple(thresholds)


def _propagate(
    weights: Sequence[FloatArray], thresholds: Sequence[FloatArray], inputs: FloatArray
) -> list[FloatArray]:
    """Activations of every layer for a batch of normalised inputs, input layer first."""
    activations = [inputs]
    for w, t in zip(weights, thresholds):
        activations.append(sigmoid(activations[-1] @ w.T + t))
    return activations


def forward(model: MlfnModel, x: ArrayLike) -> tuple[float, list[FloatArray]]:
    """Propagate one raw condition vector; returns the yield and per-layer activations."""
    query = np.asarray(x, dtype=np.float64)
    if query.shape != (model.topology.inputs,):
        raise ValueError(
            f"expected a vector of {model.topology.inputs} features, got shape {query.shape}"
        )
    inputs = model.normalizer.transform(query)[None, :]
    activations = [layer[0] for layer in _propagate(model.weights, model.thresholds, inputs)]
    output = float(model.target_scaler.unscale(activations[-1][0]))
    return output, activations


def _batch(model: MlfnModel, data: Dataset) -> tuple[FloatArray, FloatArray]:
    if len(data) == 0:
        raise DatasetError("objective needs at least one case")
    if data.dimension != model.topology.inputs:
        raise ValueError(f"expected {model.topology.inputs} features, got {data.dimension}")
    inputs = model.normalizer.transform(data.features)
    scaled = model.target_scaler.scale(data.targets)[:, None]
    return inputs, scaled


def _objective_from_output(output: FloatArray, scaled: FloatArray) -> float:
    residuals = scaled - output
    return float(0.5 * np.sum(residuals * residuals))


def objective(model: MlfnModel, data: Dataset) -> float:
    """Half the summed squared error over all cases and output neurons, in scaled units."""
    inputs, scaled = _batch(model, data)
    output = _propagate(model.weights, model.thresholds, inputs)[-1]
    return _objective_from_output(output, scaled)


@dataclass(frozen=True, slots=True)
class Gradient:
    weights: tuple[FloatArray, ...]
    thresholds: tuple[FloatArray, ...]
    objective: float

    def vector(self) -> FloatArray:
        return np.concatenate(
            [w.ravel() for w in self.weights] + [t.ravel() for t in self.thresholds]
        )


def _backprop(
    weights: Sequence[FloatArray],
    thresholds: Sequence[FloatArray],
    inputs: FloatArray,
    scaled: FloatArray,
) -> Gradient:
    activations = _propagate(weights, thresholds, inputs)
    output = activations[-1]
    # f'(z) = f(z) (1 - f(z))
    delta = (output - scaled) * output * (1.0 - output)
    grad_w: list[FloatArray] = [np.empty(0)] * len(weights)
    grad_t: list[FloatArray] = [np.empty(0)] * len(weights)
    for layer in range(len(weights) - 1, -1, -1):
        grad_w[layer] = delta.T @ activations[layer]
        grad_t[layer] = delta.sum(axis=0)
        if layer:
            below = activations[layer]
            delta = (delta @ weights[layer]) * below * (1.0 - below)
    return Gradient(tuple(grad_w), tuple(grad_t), _objective_from_output(output, scaled))


def gradient(model: MlfnModel, data: Dataset) -> Gradient:
    """Exact dE/dw and dE/dtheta by reverse accumulation."""
    inputs, scaled = _batch(model, data)
    return _backprop(model.weights, model.thresholds, inputs, scaled)


def finite_difference_gradient(model: MlfnModel, data: Dataset, step: float = 1e-5) -> FloatArray:
    """Central-difference estimate of the gradient vector, for checking backprop."""
    base = model.parameter_vector()
    estimate = np.empty_like(base)
    for index in range(base.size):
        bumped = base.copy()
        bumped[index] = base[index] + step
        upper = objective(model.with_parameters(bumped), data)
        bumped[index] = base[index] - step
        lower = objective(model.with_parameters(bumped), data)
        estimate[index] = (upper - lower) / (2.0 * step)
    return estimate


@dataclass(frozen=True, slots=True)
class TrainingResult:
    model: MlfnModel
    epochs_run: int
    final_objective: float
    initial_objective: float
    history: tuple[tuple[int, float], ...] = field(default=())


def initialize(
    topology: MlfnTopology,
    normalizer: Normalizer,
    scaler: TargetScaler,
    half_width: float,
    seed: int,
) -> MlfnModel:
    """Uniform initialisation in [-half_width, half_width], weights first then thresholds."""
    rng = np.random.default_rng(seed)
    vector = rng.uniform(-half_width, half_width, size=topology.parameter_count)
    weights, thresholds = _unpack(topology, vector)
    return MlfnModel(topology, weights, thresholds, normalizer, scaler)


def train(topology: MlfnTopology, data: Dataset, cfg: TrainConfig | None = None) -> TrainingResult:
    """Full-batch gradient descent with momentum and patience-based early stopping.

    Each step moves by ``learning_rate`` times the gradient of the summed objective. The best
    parameters seen are returned.
    """
    cfg = cfg or TrainConfig()
    if len(data) == 0:
        raise DatasetError("cannot train on an empty dataset")
    if data.dimension != topology.inputs:
        raise ValueError(f"topology expects {topology.inputs} inputs, data has {data.dimension}")
    if topology.outputs != 1:
        raise ValueError("only single-output networks are supported")

    normalizer = fit_normalizer(data)
    scaler = TargetScaler.fit(data.targets)
    model = initialize(topology, normalizer, scaler, cfg.init_half_width, cfg.seed)
    inputs = normalizer.transform(data.features)
    scaled = scaler.scale(data.targets)[:, None]

    params = model.parameter_vector()
    velocity = np.zeros_like(params)
    best_params = params.copy()
    best_objective = np.inf
    initial_objective = np.nan
    stale = 0
    history: list[tuple[int, float]] = []
    epoch = 0
    log = logger.bind(topology=topology.label(), seed=cfg.seed)

    for epoch in range(1, cfg.max_epochs + 1):
        weights, thresholds = _unpack(topology, params)
        grad = _backprop(weights, thresholds, inputs, scaled)
        current = grad.objective
        if not np.isfinite(current):
            log.warning("mlfn.diverged", epoch=epoch)
            raise TrainingDivergedError(epoch)
        if epoch == 1:
            initial_objective = current
        history.append((epoch, current))

        if current < best_objective - IMPROVEMENT_THRESHOLD:
            stale = 0
        else:
            stale += 1
        if current < best_objective:
            best_objective = current
            best_params = params.copy()
        if stale >= cfg.patience:
            log.debug("mlfn.early_stop", epoch=epoch, objective=best_objective)
            break

        velocity = cfg.momentum * velocity - cfg.learning_rate * grad.vector()
        params = params + velocity

    trained = model.with_parameters(best_params)
    log.info("mlfn.train_finished", epochs=epoch, objective=best_objective)
    return TrainingResult(
        model=trained,
        epochs_run=epoch,
        final_objective=float(best_objective),
        initial_objective=float(initial_objective),
        history=tuple(history),
    )
