from __future__ import annotations

import math

import numpy as np
import pytest
from pydantic import ValidationError

from yieldnet.models import SvrConfig, SvrGrid
from yieldnet.services import svr
from yieldnet.services.dataset import Dataset, DatasetError
from yieldnet.services.fixture import generate_yield_fixture
from yieldnet.services.svr import (
    SvrModel,
    cross_validate,
    rbf_kernel,
    rbf_matrix,
    svr_dual_objective,
    svr_grid_search,
    svr_predict,
    svr_train,
)


def _line(xs, ys) -> Dataset:
    return Dataset(
        features=np.asarray(xs, dtype=float).reshape(-1, 1),
        targets=np.asarray(ys, dtype=float),
        feature_names=("x",),
        target_name="y",
    )


def _full_beta(model: SvrModel, n: int) -> np.ndarray:
    beta = np.zeros(n)
    beta[list(model.support_indices)] = model.dual_coef
    return beta


def test_rbf_kernel_value_and_symmetry() -> None:
    a, b = [0.3, -1.2, 4.0], [1.1, 0.5, -2.0]
    assert rbf_kernel([0.0, 0.0], [1.0, 1.0], 0.5) == pytest.approx(math.exp(-1.0))
    assert rbf_kernel(a, b, 0.7) == rbf_kernel(b, a, 0.7)
    assert rbf_kernel(a, a, 3.0) == 1.0
    with pytest.raises(ValueError):
        rbf_kernel([0.0], [0.0, 1.0], 1.0)


def test_dual_objective_by_hand() -> None:
    value = svr_dual_objective(np.eye(2), np.array([1.0, 2.0]), np.array([0.5, -0.5]), 0.1)
    assert value == pytest.approx(0.85)


def test_two_points_sit_on_the_tube_edge() -> None:
    # x normalises to [-1, 1]; the optimum places both targets exactly epsilon from the fit
    ds = _line([0.0, 1.0], [0.0, 2.0])
    model = svr_train(ds, SvrConfig(C=100.0, epsilon=0.1, gamma=1.0, tol=1e-9))
    coupling = math.exp(-4.0)

    assert model.converged
    assert model.predict_many(ds.features).tolist() == pytest.approx([0.1, 1.9], abs=1e-6)
    assert model.bias == pytest.approx(1.0, abs=1e-6)
    beta = _full_beta(model, 2)
    assert beta.tolist() == pytest.approx([-0.9 / (1 - coupling), 0.9 / (1 - coupling)], abs=1e-6)


def test_solution_closes_the_duality_gap() -> None:
    xs = np.linspace(0.0, 6.0, 30)
    ds = _line(xs, np.sin(xs))
    cfg = SvrConfig(C=10.0, epsilon=0.1, gamma=1.0, tol=1e-6, max_passes=1000)
    model = svr_train(ds, cfg)
    assert model.converged

    gram = rbf_matrix(model.support_vectors, model.support_vectors, cfg.gamma)
    beta = model.dual_coef
    residuals = ds.targets - model.predict_many(ds.features)
    slack = np.maximum(0.0, np.abs(residuals) - cfg.epsilon)
    primal = 0.5 * beta @ gram @ beta + cfg.C * slack.sum()
    dual = -svr_dual_objective(gram, ds.targets[list(model.support_indices)], beta, cfg.epsilon)
    gap = primal - dual

    assert gap >= -1e-9
    assert gap <= 2 * len(ds) * cfg.C * cfg.tol
    assert model.objective == pytest.approx(-dual, rel=1e-9)


@pytest.mark.parametrize("seed", [1, 2, 3, 4, 5])
def test_converged_solution_satisfies_kkt_conditions(seed: int) -> None:
    ds = generate_yield_fixture(n=40, seed=seed)
    cfg = SvrConfig(C=10.0, epsilon=0.5, gamma=0.5)
    model = svr_train(ds, cfg)
    assert model.converged

    beta = _full_beta(model, len(ds))
    residuals = ds.targets - model.predict_many(ds.features)
    slack = cfg.tol + 1e-9

    assert abs(beta.sum()) <= 1e-9
    assert np.all(np.abs(beta) <= cfg.C)
    for coef, residual in zip(beta, residuals):
        if coef == 0:
            assert abs(residual) <= cfg.epsilon + slack
        elif abs(coef) == cfg.C:
            assert abs(residual) >= cfg.epsilon - slack
            assert np.sign(residual) == np.sign(coef)
        else:
            assert abs(abs(residual) - cfg.epsilon) <= slack
            assert np.sign(residual) == np.sign(coef)


def test_single_point_predicts_its_target() -> None:
    ds = _line([3.0], [17.5])
    model = svr_train(ds, SvrConfig(epsilon=0.0))
    assert model.converged
    assert model.support_count == 0
    assert svr_predict(model, [100.0]) == 17.5


def test_constant_targets_give_constant_model() -> None:
    ds = _line([0.0, 1.0, 2.0, 3.0], [8.0, 8.0, 8.0, 8.0])
    model = svr_train(ds, SvrConfig(epsilon=0.5))
    assert model.converged
    assert model.predict_many([[0.5], [9.0]]).tolist() == [8.0, 8.0]


def test_iteration_cap_reports_non_convergence() -> None:
    ds = generate_yield_fixture(n=40, seed=7)
    model = svr_train(ds, SvrConfig(C=100.0, epsilon=0.01, gamma=1.0, tol=1e-12, max_passes=1))
    assert not model.converged
    assert model.iterations == 2 * len(ds)


def test_scaling_targets_scales_the_model() -> None:
    ds = generate_yield_fixture(n=30, seed=9)
    cfg = SvrConfig(C=5.0, epsilon=0.4, gamma=0.8, tol=1e-4)
    doubled = SvrConfig(C=10.0, epsilon=0.8, gamma=0.8, tol=2e-4)

    base = svr_train(ds, cfg).predict_many(ds.features)
    scaled = svr_train(ds.with_targets(2 * ds.targets), doubled).predict_many(ds.features)

    assert np.allclose(scaled, 2 * base, rtol=1e-12, atol=1e-12)


def test_uncached_kernel_rows_give_identical_model(monkeypatch) -> None:
    ds = generate_yield_fixture(n=25, seed=3)
    cfg = SvrConfig(C=10.0, epsilon=0.5, gamma=0.5)
    cached = svr_train(ds, cfg)
    monkeypatch.setattr(svr, "GRAM_CACHE_LIMIT", 0)
    streamed = svr_train(ds, cfg)

    assert np.allclose(
        cached.predict_many(ds.features), streamed.predict_many(ds.features), rtol=0, atol=1e-9
    )
    assert math.isnan(streamed.objective)


def test_cross_validation_with_one_case_per_fold_is_leave_one_out() -> None:
    ds = generate_yield_fixture(n=6, seed=11)
    cfg = SvrConfig(C=10.0, epsilon=0.5, gamma=0.5)
    manual = []
    for held in range(len(ds)):
        kept = [index for index in range(len(ds)) if index != held]
        model = svr_train(ds.subset(kept), cfg)
        manual.append(abs(ds.targets[held] - model.predict(ds.features[held])))

    assert cross_validate(ds, cfg, folds=6) == pytest.approx(float(np.mean(manual)), rel=1e-12)


def test_cross_validation_rejects_too_few_samples() -> None:
    ds = generate_yield_fixture(n=4)
    with pytest.raises(ValueError):
        cross_validate(ds, SvrConfig(), folds=1)
    with pytest.raises(DatasetError):
        cross_validate(ds, SvrConfig(), folds=5)


def test_grid_ties_go_to_smallest_epsilon() -> None:
    # targets span 4, so any epsilon >= 2 leaves every point inside the tube
    xs = np.arange(10.0)
    ds = _line(xs, [0.0, 4.0, 1.0, 3.0, 2.0, 0.0, 4.0, 2.0, 1.0, 3.0])
    best = svr_grid_search(ds, C_grid=[1.0], eps_grid=[10.0, 5.0], gamma_grid=[0.5], folds=5)
    assert best.epsilon == 5.0
    assert (best.C, best.gamma) == (1.0, 0.5)


def test_grid_search_keeps_base_settings() -> None:
    ds = generate_yield_fixture(n=20, seed=2)
    base = SvrConfig(tol=1e-4, max_passes=50)
    best = svr_grid_search(
        ds, C_grid=[1.0, 10.0], eps_grid=[0.5], gamma_grid=[0.1, 1.0], folds=4, seed=3, base=base
    )
    assert best.tol == 1e-4 and best.max_passes == 50
    assert best.C in (1.0, 10.0) and best.gamma in (0.1, 1.0)
    assert best == svr_grid_search(
        ds, C_grid=[10.0, 1.0], eps_grid=[0.5], gamma_grid=[1.0, 0.1], folds=4, seed=3, base=base
    )
    with pytest.raises(ValueError):
        svr_grid_search(ds, C_grid=[], eps_grid=[0.5], gamma_grid=[1.0])


def test_model_rejects_coefficients_outside_the_box() -> None:
    trained = svr_train(generate_yield_fixture(n=10), SvrConfig(C=1.0))
    with pytest.raises(ValueError):
        SvrModel(
            support_vectors=trained.normalizer.transform(np.zeros((1, 4))),
            dual_coef=np.array([2.0]),
            bias=0.0,
            config=SvrConfig(C=1.0),
            normalizer=trained.normalizer,
        )


def _projected_gradient_minimum(
    gram: np.ndarray, targets: np.ndarray, C: float, epsilon: float, iterations: int = 5000
) -> float:
    """Minimise the 2n-variable dual with accelerated projected gradient steps."""
    n = targets.size
    signs = np.concatenate([np.ones(n), -np.ones(n)])
    hessian = np.block([[gram, -gram], [-gram, gram]])
    linear = np.concatenate([epsilon - targets, epsilon + targets])
    step = 1.0 / (2.0 * np.linalg.eigvalsh(gram)[-1])

    def value(a: np.ndarray) -> float:
        return float(0.5 * a @ hessian @ a + linear @ a)

    def project(v: np.ndarray) -> np.ndarray:
        # box [0, C] intersected with signs . a == 0; bisect on the multiplier
        low, high = -np.abs(v).max() - C, np.abs(v).max() + C
        for _ in range(60):
            mid = 0.5 * (low + high)
            if signs @ np.clip(v - mid * signs, 0.0, C) > 0:
                low = mid
            else:
                high = mid
        return np.clip(v - high * signs, 0.0, C)

    current = np.zeros(2 * n)
    look_ahead, momentum = current.copy(), 1.0
    for _ in range(iterations):
        candidate = project(look_ahead - step * (hessian @ look_ahead + linear))
        if value(candidate) > value(current):
            look_ahead, momentum = current.copy(), 1.0
            continue
        following = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * momentum * momentum))
        look_ahead = candidate + ((momentum - 1.0) / following) * (candidate - current)
        current, momentum = candidate, following
    return value(current)


def test_dual_optimum_matches_projected_gradient() -> None:
    xs = np.linspace(0.0, 6.0, 30)
    ds = _line(xs, np.sin(xs))
    cfg = SvrConfig(C=10.0, epsilon=0.1, gamma=1.0, tol=1e-6, max_passes=1000)
    model = svr_train(ds, cfg)
    assert model.converged

    inputs = model.normalizer.transform(ds.features)
    reference = _projected_gradient_minimum(
        rbf_matrix(inputs, inputs, cfg.gamma), ds.targets, cfg.C, cfg.epsilon
    )

    assert model.objective <= reference + 1e-6
    assert model.objective == pytest.approx(reference, rel=1e-4, abs=1e-6)


def test_predictions_match_a_tight_tolerance_solve() -> None:
    xs = np.linspace(0.0, 6.0, 30)
    ds = _line(xs, np.sin(xs))
    loose = svr_train(ds, SvrConfig(C=10.0, epsilon=0.1, gamma=1.0, tol=1e-6, max_passes=1000))
    tight = svr_train(
        ds, SvrConfig(C=10.0, epsilon=0.1, gamma=1.0, tol=1e-11, max_passes=20_000)
    )
    assert loose.converged and tight.converged

    gap = np.abs(loose.predict_many(ds.features) - tight.predict_many(ds.features))
    assert gap.max() < 1e-3


def test_grid_rejects_non_positive_c_and_gamma() -> None:
    with pytest.raises(ValidationError):
        SvrGrid(C=(0.0, 1.0))
    with pytest.raises(ValidationError):
        SvrGrid(gamma=(-1.0,))
    assert SvrGrid(epsilon=(0.0, 0.1)).epsilon == (0.0, 0.1)


def test_grid_search_validates_every_cell_before_training(monkeypatch) -> None:
    calls = []
    monkeypatch.setattr(svr, "cross_validate", lambda *args: calls.append(args) or 1.0)
    ds = generate_yield_fixture(n=20, seed=2)

    with pytest.raises(ValueError):
        svr_grid_search(ds, C_grid=[0.0, 1.0], eps_grid=[0.1], gamma_grid=[1.0])
    with pytest.raises(ValueError):
        svr_grid_search(ds, C_grid=[1.0], eps_grid=[-0.1], gamma_grid=[1.0])
    assert calls == []


def test_bias_needs_a_movable_multiplier() -> None:
    none = np.zeros(4, dtype=bool)
    with pytest.raises(ValueError, match="C must be positive"):
        svr._bias(np.zeros(4), none, none)
