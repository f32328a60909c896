"""Experimental protocol: best-net search, repeated trials, node sweeps and scatter output."""

from __future__ import annotations

import asyncio
import csv
import math
import statistics
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import ClassVar, Protocol, TypeVar

import numpy as np
import structlog
from numpy.typing import ArrayLike

from yieldnet.models import (
    MAX_MLFN_NODES,
    MIN_MLFN_NODES,
    CandidateSpec,
    ModelKind,
    SplitSpec,
    ToleranceRule,
    TrainConfig,
)
from yieldnet.services.dataset import Dataset, FloatArray, Normalizer, split
from yieldnet.services.grnn import GrnnModel, fit_grnn
from yieldnet.services.metrics import (
    DEFAULT_TOLERANCE,
    Evaluation,
    check_tolerance_rule,
    evaluate,
)
from yieldnet.services.mlfn import MlfnModel, MlfnTopology, TrainingDivergedError
from yieldnet.services.mlfn import train as train_mlfn
from yieldnet.services.svr import SvrModel, svr_grid_search, svr_train
from yieldnet.utils import derive_seed, round_half_up

logger = structlog.get_logger(__name__)

T = TypeVar("T")
TrainedModel = GrnnModel | MlfnModel | SvrModel
SCATTER_COLUMNS = ("actual", "predicted", "residual")


class RegressionModel(Protocol):
    kind: ClassVar[ModelKind]
    normalizer: Normalizer

    def predict(self, x: ArrayLike) -> float:
        ...

    def predict_many(self, features: ArrayLike) -> FloatArray:
        ...


@dataclass(slots=True)
class FittedCandidate:
    model: TrainedModel
    train_seconds: float
    history: tuple[tuple[int, float], ...] = ()


@dataclass(slots=True)
class TrialOutcome:
    trial: int
    seed: int
    rms_error: float = math.nan
    accuracy: float = math.nan
    train_seconds: float = 0.0
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(slots=True)
class SearchRow:
    """One candidate's aggregate over its successful trials; failures are kept alongside."""

    candidate_id: str
    kind: ModelKind
    position: int
    outcomes: list[TrialOutcome]

    @property
    def succeeded(self) -> list[TrialOutcome]:
        return [outcome for outcome in self.outcomes if outcome.ok]

    @property
    def failures(self) -> list[str]:
        return [outcome.error for outcome in self.outcomes if outcome.error is not None]

    @property
    def trial_count(self) -> int:
        return len(self.succeeded)

    @property
    def rms_errors(self) -> list[float]:
        return [outcome.rms_error for outcome in self.succeeded]

    @property
    def mean_rms_error(self) -> float:
        errors = self.rms_errors
        return float(np.mean(errors)) if errors else math.inf

    @property
    def mean_train_seconds(self) -> float:
        seconds = [outcome.train_seconds for outcome in self.succeeded]
        return float(np.mean(seconds)) if seconds else 0.0

    @property
    def accuracy(self) -> float:
        values = [outcome.accuracy for outcome in self.succeeded]
        return float(np.mean(values)) if values else math.nan

    def sort_key(self) -> tuple[float, int, str, int]:
        return (
            self.mean_rms_error,
            round_half_up(self.mean_train_seconds),
            self.candidate_id,
            self.position,
        )


@dataclass(slots=True)
class SearchReport:
    rows: list[SearchRow]
    split_seed: int
    train_fraction: float
    tolerance: float
    rule: ToleranceRule
    n_train: int
    n_test: int

    @property
    def leader(self) -> SearchRow:
        return self.rows[0]


@dataclass(frozen=True, slots=True)
class TrialSeries:
    candidate_id: str
    rms_errors: tuple[float, ...]
    train_seconds: tuple[float, ...] = field(default=())
    nodes: int | None = None

    @property
    def mean(self) -> float:
        return float(statistics.mean(self.rms_errors))

    @property
    def std(self) -> float:
        """Population standard deviation; exactly zero when every trial agrees."""
        return float(statistics.pstdev(self.rms_errors))

    @property
    def mean_train_seconds(self) -> float:
        return float(np.mean(self.train_seconds)) if self.train_seconds else 0.0


def default_roster(mlfn_trials: int = 5, train_cfg: TrainConfig | None = None) -> list[CandidateSpec]:
    """GRNN, SVR and one MLFN per hidden-node count from 2 to 25."""
    train_cfg = train_cfg or TrainConfig()
    roster = [
        CandidateSpec(kind=ModelKind.GRNN, trials=1),
        CandidateSpec(kind=ModelKind.SVR, trials=1),
    ]
    roster.extend(
        CandidateSpec(kind=ModelKind.MLFN, mlfn_nodes=nodes, trials=mlfn_trials, train=train_cfg)
        for nodes in range(MIN_MLFN_NODES, MAX_MLFN_NODES + 1)
    )
    return roster


def trial_seeds(cand: CandidateSpec, base_seed: int, position: int) -> list[int]:
    if cand.seeds is not None:
        return list(cand.seeds)
    return [derive_seed(base_seed, position, trial) for trial in range(cand.trials)]


def fit_candidate(cand: CandidateSpec, train: Dataset, seed: int) -> FittedCandidate:
    """Train one candidate on ``train``; wall time covers training only."""
    started = time.perf_counter()
    history: tuple[tuple[int, float], ...] = ()
    model: TrainedModel
    if cand.kind is ModelKind.GRNN:
        model = fit_grnn(train, sigma=cand.sigma, grid=cand.sigma_grid)
    elif cand.kind is ModelKind.SVR:
        cfg = cand.svr
        if cfg is None:
            grid = cand.svr_grid
            cfg = svr_grid_search(
                train, grid.C, grid.epsilon, grid.gamma, folds=grid.folds, seed=seed
            )
        model = svr_train(train, cfg)
    else:
        assert cand.mlfn_nodes is not None
        topology = MlfnTopology.single_hidden(cand.mlfn_nodes, inputs=train.dimension)
        result = train_mlfn(topology, train, cand.train.model_copy(update={"seed": seed}))
        model, history = result.model, result.history
    return FittedCandidate(model, time.perf_counter() - started, history)


def evaluate_model(
    model: RegressionModel,
    data: Dataset,
    tolerance: float = DEFAULT_TOLERANCE,
    rule: ToleranceRule = ToleranceRule.RELATIVE,
    target_range: float | None = None,
) -> Evaluation:
    predicted = model.predict_many(data.features)
    return evaluate(data.targets, predicted, tolerance, rule, target_range)


def _run_trial(
    cand: CandidateSpec,
    train: Dataset,
    test: Dataset,
    trial: int,
    seed: int,
    tolerance: float,
    rule: ToleranceRule,
    record_timing: bool,
    capture_errors: bool,
) -> TrialOutcome:
    try:
        fitted = fit_candidate(cand, train, seed)
        scores = evaluate_model(fitted.model, test, tolerance, rule, train.target_range)
    except (TrainingDivergedError, ValueError) as exc:
        if not capture_errors:
            raise
        logger.warning(
            "harness.trial_failed", candidate=cand.candidate_id, trial=trial, error=str(exc)
        )
        return TrialOutcome(trial=trial, seed=seed, error=str(exc))
    logger.debug(
        "harness.trial_finished",
        candidate=cand.candidate_id,
        trial=trial,
        rmse=scores.rms_error,
    )
    return TrialOutcome(
        trial=trial,
        seed=seed,
        rms_error=scores.rms_error,
        accuracy=scores.accuracy,
        train_seconds=fitted.train_seconds if record_timing else 0.0,
    )


async def _bounded(jobs: int, work: Sequence[Callable[[], T]]) -> list[T]:
    """Run blocking callables on worker threads, at most ``jobs`` at a time, results in order."""
    if jobs < 1:
        raise ValueError(f"jobs must be >= 1, got {jobs}")
    semaphore = asyncio.Semaphore(jobs)

    async def run(fn: Callable[[], T]) -> T:
        async with semaphore:
            return await asyncio.to_thread(fn)

    return list(await asyncio.gather(*(run(fn) for fn in work)))


async def abest_net_search(
    ds: Dataset,
    candidates: Sequence[CandidateSpec],
    split_spec: SplitSpec,
    tolerance: float = DEFAULT_TOLERANCE,
    rule: ToleranceRule = ToleranceRule.RELATIVE,
    seed: int = 0,
    jobs: int = 1,
    record_timing: bool = True,
) -> SearchReport:
    if not candidates:
        raise ValueError("best-net search needs at least one candidate")
    train, test = split(ds, split_spec)
    check_tolerance_rule(test.targets, rule)
    work: list[Callable[[], TrialOutcome]] = []
    owners: list[int] = []
    for position, cand in enumerate(candidates):
        for trial, trial_seed in enumerate(trial_seeds(cand, seed, position)):
            work.append(
                lambda c=cand, t=trial, s=trial_seed: _run_trial(
                    c, train, test, t, s, tolerance, rule, record_timing, True
                )
            )
            owners.append(position)
    logger.info(
        "harness.search_started", candidates=len(candidates), trials=len(work), jobs=jobs
    )
    outcomes = await _bounded(jobs, work)

    rows = [
        SearchRow(candidate_id=cand.candidate_id, kind=cand.kind, position=position, outcomes=[])
        for position, cand in enumerate(candidates)
    ]
    for owner, outcome in zip(owners, outcomes):
        rows[owner].outcomes.append(outcome)
    rows.sort(key=SearchRow.sort_key)
    report = SearchReport(
        rows=rows,
        split_seed=split_spec.seed,
        train_fraction=split_spec.train_fraction,
        tolerance=tolerance,
        rule=rule,
        n_train=len(train),
        n_test=len(test),
    )
    logger.info(
        "harness.search_finished",
        leader=report.leader.candidate_id,
        rmse=report.leader.mean_rms_error,
    )
    return report


def best_net_search(
    ds: Dataset,
    candidates: Sequence[CandidateSpec],
    split_spec: SplitSpec,
    tolerance: float = DEFAULT_TOLERANCE,
    rule: ToleranceRule = ToleranceRule.RELATIVE,
    seed: int = 0,
    jobs: int = 1,
    record_timing: bool = True,
) -> SearchReport:
    """Train and score every candidate on one shared split; rows come back ranked."""
    return asyncio.run(
        abest_net_search(ds, candidates, split_spec, tolerance, rule, seed, jobs, record_timing)
    )


async def _series(
    ds: Dataset,
    cand: CandidateSpec,
    split_spec: SplitSpec,
    seeds: Sequence[int],
    jobs: int,
    tolerance: float,
    rule: ToleranceRule,
    record_timing: bool,
) -> TrialSeries:
    train, test = split(ds, split_spec)
    check_tolerance_rule(test.targets, rule)
    work = [
        (lambda t=trial, s=trial_seed: _run_trial(
            cand, train, test, t, s, tolerance, rule, record_timing, False
        ))
        for trial, trial_seed in enumerate(seeds)
    ]
    outcomes = await _bounded(jobs, work)
    return TrialSeries(
        candidate_id=cand.candidate_id,
        rms_errors=tuple(outcome.rms_error for outcome in outcomes),
        train_seconds=tuple(outcome.train_seconds for outcome in outcomes),
        nodes=cand.mlfn_nodes,
    )


def repeated_trials(
    ds: Dataset,
    cand: CandidateSpec,
    split_spec: SplitSpec,
    n_trials: int,
    seed: int = 0,
    jobs: int = 1,
    tolerance: float = DEFAULT_TOLERANCE,
    rule: ToleranceRule = ToleranceRule.RELATIVE,
    record_timing: bool = True,
) -> TrialSeries:
    """Independent train/evaluate runs on one split that differ only in their trial seed."""
    if n_trials < 1:
        raise ValueError(f"n_trials must be >= 1, got {n_trials}")
    seeds = [derive_seed(seed, 0, trial) for trial in range(n_trials)]
    series = asyncio.run(
        _series(ds, cand, split_spec, seeds, jobs, tolerance, rule, record_timing)
    )
    logger.info(
        "harness.trials_finished", candidate=series.candidate_id, mean=series.mean, std=series.std
    )
    return series


def parse_node_range(text: str) -> tuple[int, int]:
    """Parse ``"2..25"`` or ``"7"`` into an inclusive range inside [2, 25]."""
    low_text, sep, high_text = text.partition("..")
    try:
        low = int(low_text)
        high = int(high_text) if sep else low
    except ValueError:
        raise ValueError(f"invalid node range {text!r}; expected e.g. 2..25") from None
    check_node_range((low, high))
    return low, high


def check_node_range(node_range: tuple[int, int]) -> None:
    low, high = node_range
    if not (MIN_MLFN_NODES <= low <= high <= MAX_MLFN_NODES):
        raise ValueError(
            f"node range {low}..{high} must satisfy "
            f"{MIN_MLFN_NODES} <= low <= high <= {MAX_MLFN_NODES}"
        )


def node_sweep(
    ds: Dataset,
    node_range: tuple[int, int] = (MIN_MLFN_NODES, MAX_MLFN_NODES),
    trials_per_node: int = 5,
    split_spec: SplitSpec | None = None,
    seed: int = 0,
    jobs: int = 1,
    train_cfg: TrainConfig | None = None,
    record_timing: bool = True,
) -> list[TrialSeries]:
    """One trial series per hidden-node count in ``node_range`` (inclusive)."""
    check_node_range(node_range)
    if trials_per_node < 1:
        raise ValueError(f"trials_per_node must be >= 1, got {trials_per_node}")
    split_spec = split_spec or SplitSpec()
    train_cfg = train_cfg or TrainConfig()
    low, high = node_range

    async def runner() -> list[TrialSeries]:
        sweep = []
        for nodes in range(low, high + 1):
            cand = CandidateSpec(
                kind=ModelKind.MLFN, mlfn_nodes=nodes, trials=trials_per_node, train=train_cfg
            )
            seeds = trial_seeds(cand, seed, nodes)
            # sweeps report RMS error only; the range rule never rejects zero yields
            sweep.append(
                await _series(
                    ds,
                    cand,
                    split_spec,
                    seeds,
                    jobs,
                    DEFAULT_TOLERANCE,
                    ToleranceRule.RANGE,
                    record_timing,
                )
            )
        return sweep

    sweep = asyncio.run(runner())
    logger.info("harness.sweep_finished", nodes=f"{low}..{high}", trials=trials_per_node)
    return sweep


def emit_scatter_report(
    model: RegressionModel,
    eval_data: Dataset,
    out_path: Path,
    tolerance: float = DEFAULT_TOLERANCE,
    rule: ToleranceRule = ToleranceRule.RELATIVE,
    target_range: float | None = None,
) -> Evaluation:
    """Write ``actual,predicted,residual`` rows (residual = actual - predicted)."""
    scores = evaluate_model(model, eval_data, tolerance, rule, target_range)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with out_path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(SCATTER_COLUMNS)
        for actual, predicted, residual in scores.residuals:
            writer.writerow([repr(actual), repr(predicted), repr(residual)])
    logger.info("harness.scatter_written", path=str(out_path), rows=scores.n)
    return scores
