from __future__ import annotations

import math

import numpy as np
import pytest

from yieldnet.models import TrainConfig
from yieldnet.services import mlfn
from yieldnet.services.dataset import Dataset, Normalizer, fit_normalizer
from yieldnet.services.fixture import generate_yield_fixture
from yieldnet.services.metrics import rms_error
from yieldnet.services.mlfn import (
    Gradient,
    MlfnModel,
    MlfnTopology,
    TargetScaler,
    TrainingDivergedError,
    finite_difference_gradient,
    forward,
    gradient,
    initialize,
    objective,
    sigmoid,
    train,
)


def test_sigmoid_is_stable_at_extremes() -> None:
    values = sigmoid(np.array([-1000.0, 0.0, 1000.0]))
    assert values.tolist() == [0.0, 0.5, 1.0]
    tail = sigmoid(np.array([-1000.0]))[0]
    assert not math.isnan(tail)
    assert 0.0 <= tail <= 1e-300
    assert sigmoid(np.array([math.log(3.0)]))[0] == pytest.approx(0.75, abs=1e-15)
    assert sigmoid(np.array([2.0]))[0] == pytest.approx(1 / (1 + np.exp(-2.0)))


def test_topology_counts_weights_and_thresholds() -> None:
    topology = MlfnTopology.single_hidden(5)
    assert topology.layer_sizes == (4, 5, 1)
    assert topology.weight_shapes == [(5, 4), (1, 5)]
    assert topology.weight_count == 25
    assert topology.threshold_count == 6
    assert topology.parameter_count == 31
    assert topology.label() == "4-5-1"
    with pytest.raises(ValueError):
        MlfnTopology((4,))
    with pytest.raises(ValueError):
        MlfnTopology((4, 0, 1))


def test_target_scaler_maps_training_range_into_sigmoid_band() -> None:
    scaler = TargetScaler.fit([20.0, 60.0, 100.0])
    assert scaler.scale([20.0, 100.0]).tolist() == pytest.approx([0.1, 0.9])
    assert scaler.unscale(scaler.scale([42.0]))[0] == pytest.approx(42.0)
    flat = TargetScaler.fit([7.0, 7.0])
    assert flat.scale([7.0])[0] == pytest.approx(0.5)


def _small_model(seed: int = 3):
    ds = generate_yield_fixture(n=12, seed=seed)
    topology = MlfnTopology.single_hidden(3)
    model = initialize(
        topology, fit_normalizer(ds), TargetScaler.fit(ds.targets), half_width=0.5, seed=seed
    )
    return model, ds


def test_backprop_matches_finite_differences() -> None:
    model, ds = _small_model()
    analytic = gradient(model, ds)
    numeric = finite_difference_gradient(model, ds)

    assert analytic.objective == pytest.approx(objective(model, ds))
    assert np.allclose(analytic.vector(), numeric, rtol=1e-5, atol=1e-8)


def test_backprop_matches_finite_differences_two_hidden_layers() -> None:
    ds = generate_yield_fixture(n=10, seed=8)
    topology = MlfnTopology((4, 3, 2, 1))
    model = initialize(topology, fit_normalizer(ds), TargetScaler.fit(ds.targets), 0.8, seed=2)
    assert np.allclose(
        gradient(model, ds).vector(), finite_difference_gradient(model, ds), rtol=1e-5, atol=1e-8
    )


def test_forward_returns_every_layer() -> None:
    model, ds = _small_model()
    output, activations = forward(model, ds.features[0])
    assert [layer.shape for layer in activations] == [(4,), (3,), (1,)]
    assert output == pytest.approx(model.predict_many(ds.features[:1])[0])
    with pytest.raises(ValueError):
        forward(model, ds.features[0][:3])


def test_parameter_vector_round_trips() -> None:
    model, ds = _small_model()
    rebuilt = model.with_parameters(model.parameter_vector())
    assert np.array_equal(rebuilt.predict_many(ds.features), model.predict_many(ds.features))
    with pytest.raises(ValueError):
        model.with_parameters(np.zeros(3))


def test_training_reduces_objective_and_is_seeded() -> None:
    ds = generate_yield_fixture(n=60, seed=5)
    topology = MlfnTopology.single_hidden(5)
    cfg = TrainConfig(max_epochs=1500, seed=11)

    first = train(topology, ds, cfg)
    again = train(topology, ds, cfg)
    other = train(topology, ds, cfg.model_copy(update={"seed": 12}))

    assert first.final_objective < first.initial_objective
    assert first.history[0] == (1, first.initial_objective)
    assert np.array_equal(first.model.parameter_vector(), again.model.parameter_vector())
    assert not np.array_equal(first.model.parameter_vector(), other.model.parameter_vector())
    fitted = rms_error(ds.targets, first.model.predict_many(ds.features))
    assert fitted < float(np.std(ds.targets))


def test_training_returns_best_objective_seen() -> None:
    ds = generate_yield_fixture(n=30, seed=6)
    result = train(MlfnTopology.single_hidden(4), ds, TrainConfig(max_epochs=300, seed=1))
    assert result.final_objective == min(value for _, value in result.history)
    assert objective(result.model, ds) == pytest.approx(result.final_objective)


def test_patience_stops_a_stalled_run() -> None:
    ds = generate_yield_fixture(n=20, seed=2)
    cfg = TrainConfig(learning_rate=1e-12, patience=5, max_epochs=100)
    result = train(MlfnTopology.single_hidden(3), ds, cfg)
    assert result.epochs_run == 6


def test_non_finite_objective_raises(monkeypatch) -> None:
    def broken(weights, thresholds, inputs, scaled):
        return Gradient(
            tuple(np.zeros_like(w) for w in weights),
            tuple(np.zeros_like(t) for t in thresholds),
            float("nan"),
        )

    monkeypatch.setattr(mlfn, "_backprop", broken)
    with pytest.raises(TrainingDivergedError) as excinfo:
        train(MlfnTopology.single_hidden(3), generate_yield_fixture(n=10), TrainConfig())
    assert excinfo.value.epoch == 1


def test_train_rejects_mismatched_topology() -> None:
    ds = generate_yield_fixture(n=10)
    with pytest.raises(ValueError):
        train(MlfnTopology((3, 2, 1)), ds)
    with pytest.raises(ValueError):
        train(MlfnTopology((4, 2, 2)), ds)


@pytest.mark.parametrize("hidden", [2, 4, 10])
@pytest.mark.parametrize("seed", [0, 1])
def test_backprop_matches_finite_differences_across_topologies(hidden, seed) -> None:
    ds = generate_yield_fixture(n=15, seed=30 + seed)
    model = initialize(
        MlfnTopology.single_hidden(hidden),
        fit_normalizer(ds),
        TargetScaler.fit(ds.targets),
        half_width=0.5,
        seed=seed,
    )
    assert np.allclose(
        gradient(model, ds).vector(), finite_difference_gradient(model, ds), rtol=1e-5, atol=1e-8
    )


def test_forward_matches_hand_evaluation() -> None:
    hidden_w = np.array([[0.2, -0.4, 0.1, 0.3], [-0.5, 0.25, 0.6, -0.1]])
    hidden_t = np.array([0.05, -0.2])
    out_w = np.array([[0.7, -1.1]])
    out_t = np.array([0.3])
    model = MlfnModel(
        MlfnTopology.single_hidden(2),
        (hidden_w, out_w),
        (hidden_t, out_t),
        Normalizer(mean=np.zeros(4), std=np.ones(4)),
        TargetScaler(slope=1.0, offset=0.0),
    )
    x = [0.5, -1.0, 2.0, 0.25]

    def logistic(value: float) -> float:
        return 1.0 / (1.0 + math.exp(-value))

    hidden = [
        logistic(hidden_t[i] + sum(hidden_w[i, k] * x[k] for k in range(4))) for i in range(2)
    ]
    expected = logistic(out_t[0] + sum(out_w[0, i] * hidden[i] for i in range(2)))

    output, _ = forward(model, x)
    assert abs(output - expected) < 1e-12


def test_duplicating_every_case_doubles_the_gradient() -> None:
    model, ds = _small_model()
    doubled = Dataset(
        features=np.vstack([ds.features, ds.features]),
        targets=np.concatenate([ds.targets, ds.targets]),
    )
    assert np.allclose(
        gradient(model, doubled).vector(), 2 * gradient(model, ds).vector(), rtol=1e-12, atol=1e-15
    )


IDENTITY = TargetScaler(slope=1.0, offset=0.0)


def _zero_model(hidden: int = 2, scaler: TargetScaler = IDENTITY) -> MlfnModel:
    topology = MlfnTopology.single_hidden(hidden)
    return MlfnModel(
        topology,
        tuple(np.zeros(shape) for shape in topology.weight_shapes),
        tuple(np.zeros(rows) for rows, _ in topology.weight_shapes),
        Normalizer(mean=np.zeros(4), std=np.ones(4)),
        scaler,
    )


def _cases(targets) -> Dataset:
    values = np.asarray(targets, dtype=float)
    return Dataset(features=np.zeros((values.size, 4)), targets=values)


def test_zero_parameters_put_every_neuron_at_one_half() -> None:
    scaler = TargetScaler.fit([20.0, 100.0])
    model = _zero_model(hidden=3, scaler=scaler)

    output, activations = forward(model, [24.0, 50.0, 150.0, 2.0])
    assert activations[1].tolist() == [0.5, 0.5, 0.5]
    assert activations[2].tolist() == [0.5]
    assert output == pytest.approx(scaler.unscale(0.5))
    assert output == pytest.approx(60.0)


def test_single_hidden_neuron_at_zero_input() -> None:
    model = MlfnModel(
        MlfnTopology.single_hidden(1),
        (np.array([[1.0, 0.0, 0.0, 0.0]]), np.array([[0.0]])),
        (np.array([0.0]), np.array([0.0])),
        Normalizer(mean=np.zeros(4), std=np.ones(4)),
        IDENTITY,
    )
    _, activations = forward(model, np.zeros(4))
    assert activations[1][0] == 0.5


@pytest.mark.parametrize(
    ("targets", "expected"),
    [
        ([0.5, 0.5, 0.5], 0.0),
        ([1.5], 0.5),
        ([0.6, 0.8], 0.05),
    ],
)
def test_objective_is_half_summed_squared_residual(targets, expected) -> None:
    # every raw output of the zero network is 0.5
    assert abs(objective(_zero_model(), _cases(targets)) - expected) < 1e-12


def test_gradient_vanishes_at_a_global_minimum() -> None:
    ds = generate_yield_fixture(n=12, seed=3)
    model = initialize(MlfnTopology.single_hidden(3), fit_normalizer(ds), IDENTITY, 0.5, seed=3)
    perfect = ds.with_targets(model.predict_many(ds.features))

    assert objective(model, perfect) < 1e-24
    assert np.max(np.abs(gradient(model, perfect).vector())) < 1e-12


def test_raw_output_stays_strictly_inside_unit_interval() -> None:
    ds = generate_yield_fixture(n=30, seed=15)
    model = initialize(
        MlfnTopology.single_hidden(6), fit_normalizer(ds), TargetScaler.fit(ds.targets), 3.0, seed=5
    )
    queries = generate_yield_fixture(n=50, seed=51).features
    for query in queries:
        _, activations = forward(model, query)
        assert 0.0 < activations[-1][0] < 1.0


GRADIENT_CHECK_PAIRS = [((2, 4, 10)[seed % 3], seed) for seed in range(20)]


@pytest.mark.parametrize(("hidden", "seed"), GRADIENT_CHECK_PAIRS)
def test_backprop_relative_error_on_ten_samples(hidden, seed) -> None:
    ds = generate_yield_fixture(n=10, seed=100 + seed)
    model = initialize(
        MlfnTopology.single_hidden(hidden),
        fit_normalizer(ds),
        TargetScaler.fit(ds.targets),
        half_width=0.5,
        seed=seed,
    )
    analytic = gradient(model, ds).vector()
    numeric = finite_difference_gradient(model, ds)
    relative = np.max(np.abs(analytic - numeric)) / max(np.max(np.abs(numeric)), 1e-12)
    assert relative < 1e-4


def test_constant_targets_converge_within_five_hundred_epochs() -> None:
    ds = generate_yield_fixture(n=200, seed=21)
    flat = ds.with_targets(np.full(len(ds), 55.0))
    result = train(MlfnTopology.single_hidden(3), flat, TrainConfig(max_epochs=500, seed=1))

    # constant targets scale with slope 1, so yield residuals equal scaled residuals
    assert result.model.target_scaler.slope == 1.0
    assert np.max(np.abs(result.model.predict_many(flat.features) - 55.0)) < 1e-3


def test_objective_never_increases_without_momentum() -> None:
    ds = generate_yield_fixture(n=20, seed=9)
    cfg = TrainConfig(momentum=0.0, max_epochs=300, seed=4)
    result = train(MlfnTopology.single_hidden(3), ds, cfg)

    values = [value for _, value in result.history]
    assert len(values) > 1
    assert all(later <= earlier + 1e-15 for earlier, later in zip(values, values[1:]))
    assert result.final_objective <= result.initial_objective


def test_history_matches_recomputed_objective() -> None:
    ds = generate_yield_fixture(n=20, seed=10)
    topology = MlfnTopology.single_hidden(3)
    cfg = TrainConfig(momentum=0.0, max_epochs=40, seed=6)
    result = train(topology, ds, cfg)

    model = initialize(
        topology, fit_normalizer(ds), TargetScaler.fit(ds.targets), cfg.init_half_width, cfg.seed
    )
    for epoch, recorded in result.history:
        assert abs(objective(model, ds) - recorded) < 1e-12, epoch
        step = cfg.learning_rate * gradient(model, ds).vector()
        model = model.with_parameters(model.parameter_vector() - step)
    assert abs(objective(result.model, ds) - result.final_objective) < 1e-12


def test_fits_a_smooth_four_input_function() -> None:
    rng = np.random.default_rng(2024)
    x = rng.uniform(-1.0, 1.0, size=(200, 4))
    noise_sigma = 2.0
    y = 50.0 + 12.0 * np.tanh(x[:, 0]) - 8.0 * x[:, 1] + 5.0 * x[:, 2]
    ds = Dataset(features=x, targets=y + rng.normal(0.0, noise_sigma, size=200))

    cfg = TrainConfig(learning_rate=0.02, seed=3)
    result = train(MlfnTopology.single_hidden(4), ds, cfg)
    fitted = rms_error(ds.targets, result.model.predict_many(ds.features))
    assert fitted < 1.5 * noise_sigma
