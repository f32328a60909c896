"""CSV export helpers for search reports, sweeps, predictions and training logs."""

from __future__ import annotations

import csv
import math
from collections.abc import Iterable, Sequence
from pathlib import Path

from yieldnet.services.dataset import DOMAIN_SCHEMA, FloatArray
from yieldnet.services.harness import SearchReport, TrialSeries
from yieldnet.services.optimize import ConditionOptimum
from yieldnet.utils import format_duration

REPORT_COLUMNS = (
    "rank",
    "candidate",
    "kind",
    "mean_rms_error",
    "mean_train_ms",
    "mean_train_hms",
    "accuracy",
    "tolerance",
    "rule",
    "trials",
    "rms_errors",
    "failures",
)
SWEEP_COLUMNS = ("nodes", "mean_rms_error", "std_rms_error", "mean_train_ms", "trials", "rms_errors")


def _number(value: float) -> str:
    """``repr`` for finite values; blank for missing ones."""
    return repr(float(value)) if math.isfinite(value) else ""


def _ms(seconds: float) -> str:
    return f"{seconds * 1000.0:.3f}"


def _join(values: Iterable[float]) -> str:
    return ";".join(repr(float(value)) for value in values)


def _write(path: Path, header: Sequence[str], rows: Iterable[Sequence[object]]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def write_report_csv(report: SearchReport, path: Path) -> Path:
    rows = []
    for rank, row in enumerate(report.rows, start=1):
        rows.append(
            [
                rank,
                row.candidate_id,
                row.kind.value,
                _number(row.mean_rms_error),
                _ms(row.mean_train_seconds),
                format_duration(row.mean_train_seconds),
                _number(row.accuracy),
                repr(report.tolerance),
                report.rule.value,
                row.trial_count,
                _join(row.rms_errors),
                " | ".join(row.failures),
            ]
        )
    return _write(path, REPORT_COLUMNS, rows)


def write_sweep_csv(series: Sequence[TrialSeries], path: Path) -> Path:
    rows = [
        [
            item.nodes if item.nodes is not None else item.candidate_id,
            repr(item.mean),
            repr(item.std),
            _ms(item.mean_train_seconds),
            len(item.rms_errors),
            _join(item.rms_errors),
        ]
        for item in series
    ]
    return _write(path, SWEEP_COLUMNS, rows)


def write_trials_csv(series: TrialSeries, path: Path) -> Path:
    rows = [
        [trial, repr(error), _ms(seconds)]
        for trial, (error, seconds) in enumerate(
            zip(series.rms_errors, series.train_seconds), start=1
        )
    ]
    return _write(path, ("trial", "rms_error", "train_ms"), rows)


def write_predictions_csv(
    features: FloatArray,
    predictions: FloatArray,
    path: Path,
    feature_names: Sequence[str] = DOMAIN_SCHEMA.feature_names,
) -> Path:
    header = (*feature_names, "predicted_" + DOMAIN_SCHEMA.target_name)
    rows = (
        [repr(float(value)) for value in (*row, predicted)]
        for row, predicted in zip(features, predictions)
    )
    return _write(path, header, rows)


def write_epoch_log(history: Sequence[tuple[int, float]], path: Path) -> Path:
    return _write(path, ("epoch", "objective"), ([epoch, repr(value)] for epoch, value in history))


def write_optimum_csv(
    optimum: ConditionOptimum,
    path: Path,
    feature_names: Sequence[str] = DOMAIN_SCHEMA.feature_names,
) -> Path:
    header = ("rank", *feature_names, "predicted_" + DOMAIN_SCHEMA.target_name)
    rows = (
        [rank, *(repr(value) for value in conditions), repr(predicted)]
        for rank, (conditions, predicted) in enumerate(optimum.top, start=1)
    )
    return _write(path, header, rows)
