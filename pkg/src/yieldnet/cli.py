"""Command-line interface for yieldnet."""

from __future__ import annotations

from collections.abc import Iterator
from contextlib import contextmanager
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np
import structlog
import typer
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

from yieldnet import exporters
from yieldnet.models import (
    MAX_MLFN_NODES,
    MIN_MLFN_NODES,
    CandidateSpec,
    Conditions,
    ModelKind,
    SplitSpec,
    SvrConfig,
    SvrGrid,
    ToleranceRule,
    TrainConfig,
)
from yieldnet.reporting import build_search_report, build_sweep_report
from yieldnet.services import (
    DOMAIN_SCHEMA,
    DatasetError,
    MetricsError,
    ModelFormatError,
    Provenance,
    SearchReport,
    TrainingDivergedError,
    best_net_search,
    bounds_from_dataset,
    emit_scatter_report,
    evaluate_model,
    fit_candidate,
    generate_yield_fixture,
    load_csv,
    load_feature_csv,
    load_model,
    node_sweep,
    optimize_conditions,
    parse_node_range,
    repeated_trials,
    save_model,
    split,
    write_dataset_csv,
)
from yieldnet.services.fixture import CONDITION_RANGES, DEFAULT_FIXTURE_SEED, DEFAULT_FIXTURE_SIZE
from yieldnet.services.persistence import read_model_file
from yieldnet.settings import Settings, configure_logging, get_settings
from yieldnet.utils import derive_seed, format_duration

console = Console()
err_console = Console(stderr=True)
app = typer.Typer(help="yieldnet: GRNN, MLFN and SVR models for reaction-yield prediction")
logger = structlog.get_logger(__name__)

RUNTIME_ERRORS = (DatasetError, MetricsError, ModelFormatError, TrainingDivergedError, OSError, ValueError)


class KindChoice(str, Enum):
    grnn = "grnn"
    svr = "svr"
    mlfn = "mlfn"

    @property
    def model_kind(self) -> ModelKind:
        return ModelKind(self.value.upper())


@app.callback()
def main(
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Log debug events to stderr"),
) -> None:
    """Train, compare and apply yield-regression models."""
    settings = get_settings()
    configure_logging("DEBUG" if verbose else settings.log_level)


@contextmanager
def _runtime_errors() -> Iterator[None]:
    """Report data, training and I/O failures on stderr and exit with status 1."""
    try:
        yield
    except RUNTIME_ERRORS as exc:
        err_console.print(f"error: {exc}", style="red", markup=False, soft_wrap=True)
        raise typer.Exit(code=1) from exc


def _split_spec(settings: Settings, seed: Optional[int], train_fraction: Optional[float]) -> SplitSpec:
    fraction = settings.train_fraction if train_fraction is None else train_fraction
    if not 0 < fraction < 1:
        raise typer.BadParameter(
            f"train fraction must lie strictly between 0 and 1, got {fraction}",
            param_hint="--train-fraction",
        )
    resolved_seed = settings.seed if seed is None else seed
    if not 0 <= resolved_seed < 2**64:
        raise typer.BadParameter("seed must be a 64-bit unsigned integer", param_hint="--seed")
    return SplitSpec(train_fraction=fraction, seed=resolved_seed)


def _tolerance(settings: Settings, tolerance: Optional[float]) -> float:
    value = settings.tolerance if tolerance is None else tolerance
    if not value > 0:
        raise typer.BadParameter(f"tolerance must be positive, got {value}", param_hint="--tolerance")
    return value


def _train_config(
    learning_rate: float, momentum: float, max_epochs: int, patience: int
) -> TrainConfig:
    try:
        return TrainConfig(
            learning_rate=learning_rate,
            momentum=momentum,
            max_epochs=max_epochs,
            patience=patience,
        )
    except ValidationError as exc:
        raise typer.BadParameter(str(exc)) from None


def _candidate(
    kind: KindChoice,
    nodes: Optional[int],
    train_cfg: TrainConfig,
    sigma: Optional[float] = None,
    c_values: Optional[list[float]] = None,
    eps_values: Optional[list[float]] = None,
    gamma_values: Optional[list[float]] = None,
    folds: int = 5,
    trials: int = 1,
) -> CandidateSpec:
    if kind is KindChoice.mlfn and nodes is None:
        raise typer.BadParameter("--nodes is required for --kind mlfn", param_hint="--nodes")
    if kind is not KindChoice.mlfn and nodes is not None:
        raise typer.BadParameter("--nodes only applies to --kind mlfn", param_hint="--nodes")
    try:
        svr: SvrConfig | None = None
        grid = SvrGrid(folds=folds)
        if kind is KindChoice.svr:
            grid = SvrGrid(
                C=tuple(c_values or grid.C),
                epsilon=tuple(eps_values or grid.epsilon),
                gamma=tuple(gamma_values or grid.gamma),
                folds=folds,
            )
            if len(grid.C) == len(grid.epsilon) == len(grid.gamma) == 1:
                svr = SvrConfig(C=grid.C[0], epsilon=grid.epsilon[0], gamma=grid.gamma[0])
        return CandidateSpec(
            kind=kind.model_kind,
            mlfn_nodes=nodes,
            sigma=sigma,
            svr=svr,
            svr_grid=grid,
            train=train_cfg,
            trials=trials,
        )
    except ValidationError as exc:
        raise typer.BadParameter(str(exc)) from None


def _roster(
    kinds: list[KindChoice], node_text: str, mlfn_trials: int, train_cfg: TrainConfig
) -> list[CandidateSpec]:
    try:
        low, high = parse_node_range(node_text)
    except ValueError as exc:
        raise typer.BadParameter(str(exc), param_hint="--nodes") from None
    roster: list[CandidateSpec] = []
    for kind in kinds:
        if kind is KindChoice.mlfn:
            roster.extend(
                CandidateSpec(
                    kind=ModelKind.MLFN, mlfn_nodes=nodes, trials=mlfn_trials, train=train_cfg
                )
                for nodes in range(low, high + 1)
            )
        else:
            roster.append(CandidateSpec(kind=kind.model_kind, trials=1))
    return roster


def _print_metrics(label: str, rmse: float, accuracy: float, rule: ToleranceRule) -> None:
    console.print(
        f"{label}: RMS error {rmse:.4f}, accuracy {accuracy * 100:.2f}% ({rule.value} rule)"
    )


def _print_leader(report: SearchReport) -> None:
    table = Table(title="Best net")
    table.add_column("Model Type")
    table.add_column("Mean RMS Error", justify="right")
    table.add_column("Training Time", justify="right")
    table.add_column("Prediction Accuracy", justify="right")
    leader = report.leader
    table.add_row(
        leader.candidate_id,
        f"{leader.mean_rms_error:.2f}",
        format_duration(leader.mean_train_seconds),
        f"{leader.accuracy * 100:.2f}%",
    )
    console.print(table)


DATA_OPTION = typer.Option(..., "--data", help="CSV with time_h,temperature_c,enzyme_mg,molar_ratio,yield_pct")
SEED_OPTION = typer.Option(None, "--seed", help="Split and trial seed (default: YIELDNET_SEED or 42)")
FRACTION_OPTION = typer.Option(None, "--train-fraction", help="Training share of the data (default 0.65)")
TOLERANCE_OPTION = typer.Option(None, "--tolerance", help="Accuracy tolerance (default 0.30)")
RULE_OPTION = typer.Option(ToleranceRule.RELATIVE, "--tolerance-rule", help="relative or range")
JOBS_OPTION = typer.Option(None, "--jobs", min=1, help="Concurrent trainings (default 1)")
NO_TIMING_OPTION = typer.Option(
    False, "--no-timing", help="Write zero training times so reruns give identical files"
)
LR_OPTION = typer.Option(0.1, "--learning-rate", help="MLFN learning rate")
MOMENTUM_OPTION = typer.Option(0.9, "--momentum", help="MLFN momentum")
EPOCHS_OPTION = typer.Option(5000, "--max-epochs", help="MLFN epoch cap")
PATIENCE_OPTION = typer.Option(200, "--patience", help="MLFN epochs without improvement before stopping")


@app.command()
def config(
    json_output: bool = typer.Option(False, "--json", help="Output settings as JSON"),
) -> None:
    """Display the resolved settings."""
    settings = get_settings()
    if json_output:
        typer.echo(settings.model_dump_json(indent=2))
        return
    table = Table(title="yieldnet settings")
    table.add_column("Key")
    table.add_column("Value", overflow="fold")
    for key, value in settings.model_dump().items():
        table.add_row(key, str(value))
    console.print(table)


@app.command()
def search(
    data: Path = DATA_OPTION,
    seed: Optional[int] = SEED_OPTION,
    train_fraction: Optional[float] = FRACTION_OPTION,
    tolerance: Optional[float] = TOLERANCE_OPTION,
    tolerance_rule: ToleranceRule = RULE_OPTION,
    out_dir: Path = typer.Option(..., "--out-dir", help="Report directory"),
    kind: Optional[list[KindChoice]] = typer.Option(
        None, "--kind", help="Restrict the roster (repeatable; default grnn, svr, mlfn)"
    ),
    nodes: str = typer.Option(f"{MIN_MLFN_NODES}..{MAX_MLFN_NODES}", "--nodes", help="MLFN node range"),
    mlfn_trials: int = typer.Option(5, "--mlfn-trials", min=1, help="Trials per MLFN node count"),
    jobs: Optional[int] = JOBS_OPTION,
    no_timing: bool = NO_TIMING_OPTION,
    learning_rate: float = LR_OPTION,
    momentum: float = MOMENTUM_OPTION,
    max_epochs: int = EPOCHS_OPTION,
    patience: int = PATIENCE_OPTION,
) -> None:
    """Best-net search over GRNN, SVR and MLFN candidates on one shared split."""
    settings = get_settings()
    split_spec = _split_spec(settings, seed, train_fraction)
    tol = _tolerance(settings, tolerance)
    train_cfg = _train_config(learning_rate, momentum, max_epochs, patience)
    roster = _roster(kind or list(KindChoice), nodes, mlfn_trials, train_cfg)

    with _runtime_errors():
        ds = load_csv(data)
        report = best_net_search(
            ds,
            roster,
            split_spec,
            tolerance=tol,
            rule=tolerance_rule,
            seed=split_spec.seed,
            jobs=jobs or settings.jobs,
            record_timing=not no_timing,
        )
        out_dir.mkdir(parents=True, exist_ok=True)
        exporters.write_report_csv(report, out_dir / "report.csv")
        (out_dir / "report.md").write_text(build_search_report(report), encoding="utf-8")
        leader = report.leader
        if leader.succeeded:
            train, test = split(ds, split_spec)
            fitted = fit_candidate(roster[leader.position], train, leader.succeeded[0].seed)
            for name, part in (("train", train), ("test", test)):
                emit_scatter_report(
                    fitted.model,
                    part,
                    out_dir / f"scatter_{name}.csv",
                    tol,
                    tolerance_rule,
                    train.target_range,
                )
    _print_leader(report)
    console.print(f"[green]Report written[/green] to {out_dir}")


@app.command()
def train(
    kind: KindChoice = typer.Option(..., "--kind", help="Model family"),
    data: Path = DATA_OPTION,
    out: Path = typer.Option(..., "--out", help="Model file to write"),
    nodes: Optional[int] = typer.Option(
        None, "--nodes", min=MIN_MLFN_NODES, max=MAX_MLFN_NODES, help="MLFN hidden nodes"
    ),
    seed: Optional[int] = SEED_OPTION,
    train_fraction: Optional[float] = FRACTION_OPTION,
    tolerance: Optional[float] = TOLERANCE_OPTION,
    tolerance_rule: ToleranceRule = RULE_OPTION,
    sigma: Optional[float] = typer.Option(None, "--sigma", help="GRNN bandwidth (default: LOO search)"),
    c_values: Optional[list[float]] = typer.Option(None, "--C", help="SVR C grid value (repeatable)"),
    eps_values: Optional[list[float]] = typer.Option(
        None, "--epsilon", help="SVR epsilon grid value (repeatable)"
    ),
    gamma_values: Optional[list[float]] = typer.Option(
        None, "--gamma", help="SVR gamma grid value (repeatable)"
    ),
    folds: int = typer.Option(5, "--folds", min=2, help="SVR cross-validation folds"),
    learning_rate: float = LR_OPTION,
    momentum: float = MOMENTUM_OPTION,
    max_epochs: int = EPOCHS_OPTION,
    patience: int = PATIENCE_OPTION,
    epoch_log: Optional[Path] = typer.Option(None, "--epoch-log", help="CSV of MLFN epoch objectives"),
) -> None:
    """Train one model on the training split and save it."""
    settings = get_settings()
    split_spec = _split_spec(settings, seed, train_fraction)
    tol = _tolerance(settings, tolerance)
    train_cfg = _train_config(learning_rate, momentum, max_epochs, patience)
    cand = _candidate(
        kind, nodes, train_cfg, sigma, c_values, eps_values, gamma_values, folds=folds
    )
    if epoch_log is not None and kind is not KindChoice.mlfn:
        raise typer.BadParameter("--epoch-log only applies to --kind mlfn", param_hint="--epoch-log")

    with _runtime_errors():
        ds = load_csv(data)
        train_part, test_part = split(ds, split_spec)
        trial_seed = derive_seed(split_spec.seed, 0, 0)
        fitted = fit_candidate(cand, train_part, trial_seed)
        provenance = Provenance(
            dataset_source=ds.source,
            split_seed=split_spec.seed,
            training_config={**cand.model_dump(mode="json"), "trial_seed": trial_seed},
            target_range=train_part.target_range,
        )
        save_model(fitted.model, out, provenance)
        if epoch_log is not None:
            exporters.write_epoch_log(fitted.history, epoch_log)
        for label, part in (("train", train_part), ("test", test_part)):
            scores = evaluate_model(fitted.model, part, tol, tolerance_rule, train_part.target_range)
            _print_metrics(label, scores.rms_error, scores.accuracy, tolerance_rule)
    console.print(f"[green]Saved[/green] {cand.candidate_id} model to {out}")


@app.command()
def predict(
    model_path: Path = typer.Option(..., "--model", help="Saved model file"),
    data: Optional[Path] = typer.Option(None, "--data", help="CSV of conditions to predict"),
    out: Optional[Path] = typer.Option(None, "--out", help="Predictions CSV (with --data)"),
    time_h: Optional[float] = typer.Option(None, "--time", help="Reaction time (h)"),
    temperature_c: Optional[float] = typer.Option(None, "--temperature", help="Temperature (C)"),
    enzyme_mg: Optional[float] = typer.Option(None, "--enzyme", help="Enzyme amount (mg)"),
    molar_ratio: Optional[float] = typer.Option(None, "--ratio", help="Molar ratio"),
) -> None:
    """Predict yields for a CSV of conditions or for one inline condition."""
    inline = (time_h, temperature_c, enzyme_mg, molar_ratio)
    given = [value is not None for value in inline]
    if data is None and not all(given):
        raise typer.BadParameter("give --data or all of --time, --temperature, --enzyme, --ratio")
    if data is not None and any(given):
        raise typer.BadParameter("--data cannot be combined with inline conditions")
    if data is not None and out is None:
        raise typer.BadParameter("--out is required with --data", param_hint="--out")
    if data is None:
        try:
            Conditions(
                time_h=time_h,
                temperature_c=temperature_c,
                enzyme_mg=enzyme_mg,
                molar_ratio=molar_ratio,
            )
        except ValidationError as exc:
            raise typer.BadParameter(str(exc)) from None

    with _runtime_errors():
        model = load_model(model_path)
        if data is None:
            value = model.predict(np.array(inline, dtype=np.float64))
            typer.echo(repr(value))
            return
        assert out is not None
        names = model.normalizer.feature_names or DOMAIN_SCHEMA.feature_names
        features = load_feature_csv(data, names)
        predictions = model.predict_many(features)
        exporters.write_predictions_csv(features, predictions, out, names)
    console.print(f"[green]Wrote[/green] {len(predictions)} predictions to {out}")


@app.command("eval")
def evaluate_command(
    model_path: Path = typer.Option(..., "--model", help="Saved model file"),
    data: Path = DATA_OPTION,
    out: Path = typer.Option(..., "--out", help="Scatter CSV to write"),
    tolerance: Optional[float] = TOLERANCE_OPTION,
    tolerance_rule: ToleranceRule = RULE_OPTION,
) -> None:
    """Score a saved model on labelled data and write actual/predicted/residual rows."""
    settings = get_settings()
    tol = _tolerance(settings, tolerance)
    with _runtime_errors():
        document = read_model_file(model_path)
        model = load_model(model_path)
        ds = load_csv(data)
        target_range = document.provenance.target_range
        if target_range is None:
            target_range = ds.target_range
        scores = emit_scatter_report(model, ds, out, tol, tolerance_rule, target_range)
    _print_metrics("eval", scores.rms_error, scores.accuracy, tolerance_rule)


@app.command()
def sweep(
    data: Path = DATA_OPTION,
    nodes: str = typer.Option(f"{MIN_MLFN_NODES}..{MAX_MLFN_NODES}", "--nodes", help="Node range, e.g. 2..25"),
    trials: int = typer.Option(5, "--trials", min=1, help="Trials per node count"),
    seed: Optional[int] = SEED_OPTION,
    train_fraction: Optional[float] = FRACTION_OPTION,
    out_dir: Path = typer.Option(..., "--out-dir", help="Output directory"),
    jobs: Optional[int] = JOBS_OPTION,
    no_timing: bool = NO_TIMING_OPTION,
    learning_rate: float = LR_OPTION,
    momentum: float = MOMENTUM_OPTION,
    max_epochs: int = EPOCHS_OPTION,
    patience: int = PATIENCE_OPTION,
) -> None:
    """RMS error and training time of MLFN models across hidden-node counts."""
    settings = get_settings()
    split_spec = _split_spec(settings, seed, train_fraction)
    train_cfg = _train_config(learning_rate, momentum, max_epochs, patience)
    try:
        node_range = parse_node_range(nodes)
    except ValueError as exc:
        raise typer.BadParameter(str(exc), param_hint="--nodes") from None

    with _runtime_errors():
        ds = load_csv(data)
        series = node_sweep(
            ds,
            node_range,
            trials,
            split_spec,
            seed=split_spec.seed,
            jobs=jobs or settings.jobs,
            train_cfg=train_cfg,
            record_timing=not no_timing,
        )
        out_dir.mkdir(parents=True, exist_ok=True)
        exporters.write_sweep_csv(series, out_dir / "sweep.csv")
        (out_dir / "sweep.md").write_text(build_sweep_report(series), encoding="utf-8")
    best = min(series, key=lambda item: item.mean)
    console.print(
        f"Lowest mean RMS error: {best.nodes} nodes ({best.mean:.4f} +/- {best.std:.4f}); "
        f"sweep written to {out_dir}"
    )


@app.command()
def trials(
    kind: KindChoice = typer.Option(..., "--kind", help="Model family"),
    data: Path = DATA_OPTION,
    n_trials: int = typer.Option(10, "-n", "--trials", min=1, help="Number of trials"),
    nodes: Optional[int] = typer.Option(
        None, "--nodes", min=MIN_MLFN_NODES, max=MAX_MLFN_NODES, help="MLFN hidden nodes"
    ),
    seed: Optional[int] = SEED_OPTION,
    train_fraction: Optional[float] = FRACTION_OPTION,
    tolerance: Optional[float] = TOLERANCE_OPTION,
    tolerance_rule: ToleranceRule = RULE_OPTION,
    out_dir: Path = typer.Option(..., "--out-dir", help="Output directory"),
    jobs: Optional[int] = JOBS_OPTION,
    no_timing: bool = NO_TIMING_OPTION,
    learning_rate: float = LR_OPTION,
    momentum: float = MOMENTUM_OPTION,
    max_epochs: int = EPOCHS_OPTION,
    patience: int = PATIENCE_OPTION,
) -> None:
    """Repeat training with different trial seeds on one split."""
    settings = get_settings()
    split_spec = _split_spec(settings, seed, train_fraction)
    tol = _tolerance(settings, tolerance)
    train_cfg = _train_config(learning_rate, momentum, max_epochs, patience)
    cand = _candidate(kind, nodes, train_cfg, trials=n_trials)

    with _runtime_errors():
        ds = load_csv(data)
        series = repeated_trials(
            ds,
            cand,
            split_spec,
            n_trials,
            seed=split_spec.seed,
            jobs=jobs or settings.jobs,
            tolerance=tol,
            rule=tolerance_rule,
            record_timing=not no_timing,
        )
        out_dir.mkdir(parents=True, exist_ok=True)
        exporters.write_trials_csv(series, out_dir / "trials.csv")
    console.print(
        f"{series.candidate_id}: {n_trials} trials, mean RMS error {series.mean:.4f}, "
        f"std {series.std:.4f}"
    )


@app.command("gen-fixture")
def gen_fixture(
    out: Path = typer.Option(..., "--out", help="CSV file to write"),
    n: int = typer.Option(DEFAULT_FIXTURE_SIZE, "--n", min=1, help="Number of samples"),
    seed: int = typer.Option(DEFAULT_FIXTURE_SEED, "--seed", min=0, help="Generator seed"),
    noise: float = typer.Option(2.0, "--noise", min=0.0, help="Gaussian noise sd (yield %)"),
) -> None:
    """Write the synthetic yield-surface dataset."""
    with _runtime_errors():
        ds = generate_yield_fixture(n=n, seed=seed, noise_sd=noise)
        write_dataset_csv(ds, out)
    console.print(f"[green]Wrote[/green] {len(ds)} samples to {out}")


@app.command()
def optimize(
    model_path: Path = typer.Option(..., "--model", help="Saved model file"),
    data: Optional[Path] = typer.Option(
        None, "--data", help="Data whose per-feature min/max bound the search"
    ),
    points: int = typer.Option(9, "--points", min=1, help="Grid points per condition"),
    top: int = typer.Option(5, "--top", min=1, help="Rows to list"),
    out: Optional[Path] = typer.Option(None, "--out", help="Optional CSV of the top rows"),
) -> None:
    """Find the conditions with the highest predicted yield."""
    with _runtime_errors():
        model = load_model(model_path)
        if data is not None:
            bounds = bounds_from_dataset(load_csv(data))
        elif model.normalizer.dimension == len(CONDITION_RANGES):
            bounds = list(CONDITION_RANGES)
        else:
            raise typer.BadParameter("--data is required for non-domain models", param_hint="--data")
        optimum = optimize_conditions(model, bounds, points_per_axis=points, top=top)
        names = model.normalizer.feature_names or DOMAIN_SCHEMA.feature_names
        if out is not None:
            exporters.write_optimum_csv(optimum, out, names)
    table = Table(title=f"Top {len(optimum.top)} of {optimum.evaluated} conditions")
    for name in names:
        table.add_column(name, justify="right")
    table.add_column("Predicted yield", justify="right")
    for conditions, predicted in optimum.top:
        table.add_row(*(f"{value:.3g}" for value in conditions), f"{predicted:.2f}")
    console.print(table)


if __name__ == "__main__":  # pragma: no cover
    app()
