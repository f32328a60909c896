"""Markdown rendering of best-net search results."""

from __future__ import annotations

import math
from collections.abc import Sequence

from yieldnet.services.harness import SearchReport, TrialSeries
from yieldnet.utils import format_duration


def _percent(value: float) -> str:
    return f"{value * 100:.2f}%" if math.isfinite(value) else "n/a"


def _rmse(value: float) -> str:
    return f"{value:.2f}" if math.isfinite(value) else "failed"


def build_search_report(report: SearchReport) -> str:
    lines: list[str] = []
    lines.append("# Best net search in different ANN models")
    lines.append("")
    lines.append(
        f"_Split seed {report.split_seed}, train fraction {report.train_fraction:g} "
        f"({report.n_train} train / {report.n_test} test rows); prediction accuracy under a "
        f"{report.tolerance * 100:g}% tolerance, `{report.rule.value}` rule._"
    )
    lines.append("")
    lines.append("| Rank | Model Type | Mean RMS Error | Training Time | Prediction Accuracy | Trials |")
    lines.append("|---:|---|---:|---:|---:|---:|")
    for rank, row in enumerate(report.rows, start=1):
        lines.append(
            f"| {rank} | {row.candidate_id} | {_rmse(row.mean_rms_error)} | "
            f"{format_duration(row.mean_train_seconds)} | {_percent(row.accuracy)} | "
            f"{row.trial_count} |"
        )
    lines.append("")

    failed = [row for row in report.rows if row.failures]
    if failed:
        lines.append("## Failed trials")
        for row in failed:
            for message in row.failures:
                lines.append(f"- {row.candidate_id}: {message}")
        lines.append("")

    leader = report.leader
    lines.append(
        f"Recommended model: **{leader.candidate_id}** "
        f"(mean RMS error {_rmse(leader.mean_rms_error)})."
    )
    return "\n".join(lines) + "\n"


def build_sweep_report(series: Sequence[TrialSeries]) -> str:
    lines = ["# MLFN node sweep", ""]
    lines.append("| Nodes | Mean RMS Error | Std | Mean Training Time | Trials |")
    lines.append("|---:|---:|---:|---:|---:|")
    for item in series:
        lines.append(
            f"| {item.nodes} | {item.mean:.2f} | {item.std:.2f} | "
            f"{format_duration(item.mean_train_seconds)} | {len(item.rms_errors)} |"
        )
    return "\n".join(lines) + "\n"
