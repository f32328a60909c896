import math

import pytest

from yieldnet.models import ToleranceRule
from yieldnet.services.metrics import (
    MetricsError,
    ToleranceRuleError,
    check_tolerance_rule,
    evaluate,
    rms_error,
    tolerance_accuracy,
)

ACTUAL = [8.0, 40.0, 30.0, 20.0, 10.0]
PREDICTED = [5.0, 36.0, 30.0, 25.0, 9.0]


def test_rms_error_matches_hand_value() -> None:
    assert rms_error(ACTUAL, PREDICTED) == pytest.approx(math.sqrt(51 / 5))
    assert rms_error(ACTUAL, ACTUAL) == 0.0


def test_relative_tolerance_counts_predictions_inside_the_band() -> None:
    assert tolerance_accuracy(ACTUAL, PREDICTED, 0.30) == 0.8
    assert tolerance_accuracy(ACTUAL, PREDICTED, 0.05) == 0.2


def test_range_tolerance_uses_training_spread() -> None:
    accuracy = tolerance_accuracy(
        ACTUAL, PREDICTED, 0.30, ToleranceRule.RANGE, target_range=12.0
    )
    assert accuracy == 0.6


def test_relative_rule_refuses_zero_actuals() -> None:
    with pytest.raises(ToleranceRuleError, match="range"):
        tolerance_accuracy([0.0, 10.0], [1.0, 10.0])
    assert tolerance_accuracy([0.0, 10.0], [1.0, 10.0], 0.3, ToleranceRule.RANGE, 10.0) == 1.0


def test_rule_check_runs_without_predictions() -> None:
    with pytest.raises(ToleranceRuleError):
        check_tolerance_rule([5.0, 0.0], ToleranceRule.RELATIVE)
    check_tolerance_rule([5.0, 0.0], ToleranceRule.RANGE)
    check_tolerance_rule(ACTUAL, ToleranceRule.RELATIVE)


def test_range_rule_requires_target_range() -> None:
    with pytest.raises(ToleranceRuleError):
        tolerance_accuracy(ACTUAL, PREDICTED, 0.3, ToleranceRule.RANGE)


@pytest.mark.parametrize(
    "actual,predicted",
    [([], []), ([1.0, 2.0], [1.0]), ([1.0, math.nan], [1.0, 2.0])],
)
def test_invalid_inputs_raise(actual, predicted) -> None:
    with pytest.raises(MetricsError):
        rms_error(actual, predicted)


def test_tolerance_must_be_positive() -> None:
    with pytest.raises(MetricsError):
        tolerance_accuracy(ACTUAL, PREDICTED, 0.0)


def test_evaluate_bundles_residual_rows() -> None:
    result = evaluate(ACTUAL, PREDICTED)

    assert result.n == 5
    assert result.accuracy == 0.8
    assert result.rule is ToleranceRule.RELATIVE
    assert result.residuals[0] == (8.0, 5.0, 3.0)
    assert result.actual == ACTUAL
    assert result.predicted == PREDICTED


def test_accuracy_never_drops_as_tolerance_widens() -> None:
    previous = 0.0
    for tolerance in [0.01 * step for step in range(1, 101)]:
        current = tolerance_accuracy(ACTUAL, PREDICTED, tolerance)
        assert 0.0 <= current <= 1.0
        assert current >= previous
        previous = current
    assert previous == 1.0
