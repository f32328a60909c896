"""Ingest, validate, normalize and split tabular reaction-condition data."""

from __future__ import annotations

import csv
import math
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import structlog
from numpy.typing import ArrayLike, NDArray
from pydantic import ValidationError

from yieldnet.models import Conditions, Sample, SplitSpec
from yieldnet.utils import round_half_up

logger = structlog.get_logger(__name__)

FloatArray = NDArray[np.float64]


class DatasetError(ValueError):
    """Raised when tabular data cannot be loaded or used."""


class ZeroVarianceError(DatasetError):
    """Raised when a feature is constant over the rows used for fitting."""

    def __init__(self, feature: str) -> None:
        super().__init__(f"feature {feature!r} has zero variance in the training data")
        self.feature = feature


@dataclass(frozen=True, slots=True)
class Schema:
    """Ordered feature columns followed by one target column."""

    feature_names: tuple[str, ...]
    target_name: str

    @property
    def columns(self) -> tuple[str, ...]:
        return (*self.feature_names, self.target_name)


DOMAIN_SCHEMA = Schema(
    feature_names=("time_h", "temperature_c", "enzyme_mg", "molar_ratio"),
    target_name="yield_pct",
)


def _frozen(values: ArrayLike, ndim: int) -> FloatArray:
    array = np.array(values, dtype=np.float64)
    if array.ndim != ndim:
        raise DatasetError(f"expected a {ndim}-d array, got shape {array.shape}")
    array.setflags(write=False)
    return array


@dataclass(frozen=True, slots=True)
class Dataset:
    """A named, ordered collection of records; immutable after construction."""

    features: FloatArray
    targets: FloatArray
    feature_names: tuple[str, ...] = DOMAIN_SCHEMA.feature_names
    target_name: str = DOMAIN_SCHEMA.target_name
    source: str = "memory"

    def __post_init__(self) -> None:
        features = _frozen(self.features, 2)
        targets = _frozen(self.targets, 1)
        if features.shape[0] != targets.shape[0]:
            raise DatasetError("features and targets must have the same number of rows")
        if features.shape[1] != len(self.feature_names) or not self.feature_names:
            raise DatasetError("feature_names must name every feature column (d >= 1)")
        if not (np.isfinite(features).all() and np.isfinite(targets).all()):
            raise DatasetError("dataset values must be finite")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @classmethod
    def from_samples(cls, samples: Sequence[Sample], source: str = "memory") -> "Dataset":
        features = np.array([sample.conditions() for sample in samples], dtype=np.float64)
        targets = np.array([sample.yield_pct for sample in samples], dtype=np.float64)
        return cls(features=features.reshape(len(samples), 4), targets=targets, source=source)

    def __len__(self) -> int:
        return int(self.targets.shape[0])

    @property
    def dimension(self) -> int:
        return int(self.features.shape[1])

    @property
    def schema(self) -> Schema:
        return Schema(self.feature_names, self.target_name)

    def samples(self) -> Iterator[Sample]:
        """Yield domain records; only meaningful for the four-condition schema."""
        if self.schema != DOMAIN_SCHEMA:
            raise DatasetError("samples() requires the reaction-condition schema")
        for row, target in zip(self.features, self.targets):
            yield Sample(
                time_h=row[0],
                temperature_c=row[1],
                enzyme_mg=row[2],
                molar_ratio=row[3],
                yield_pct=target,
            )

    def subset(self, indices: Sequence[int] | NDArray[np.int64], tag: str = "subset") -> "Dataset":
        index = np.asarray(indices, dtype=np.int64)
        return Dataset(
            features=self.features[index],
            targets=self.targets[index],
            feature_names=self.feature_names,
            target_name=self.target_name,
            source=f"{self.source}#{tag}",
        )

    def with_targets(self, targets: ArrayLike) -> "Dataset":
        return Dataset(
            features=self.features,
            targets=np.asarray(targets, dtype=np.float64),
            feature_names=self.feature_names,
            target_name=self.target_name,
            source=self.source,
        )

    @property
    def target_range(self) -> float:
        return float(self.targets.max() - self.targets.min()) if len(self) else 0.0


def _parse_cell(raw: str, row: int, column: str) -> float:
    try:
        value = float(raw.strip())
    except ValueError:
        raise DatasetError(f"row {row}, column {column!r}: {raw!r} is not a number") from None
    if not math.isfinite(value):
        raise DatasetError(f"row {row}, column {column!r}: value must be finite")
    return value


def _read_rows(path: Path, expected: Sequence[str], *, allow_extra: bool = False) -> list[list[float]]:
    if not path.exists():
        raise DatasetError(f"data file not found: {path}")
    if not path.is_file():
        raise DatasetError(f"data path is not a file: {path}")
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise DatasetError(f"{path} is empty; expected header {','.join(expected)}")
        header = [name.strip() for name in header]
        head = header[: len(expected)] if allow_extra else header
        if head != list(expected):
            raise DatasetError(
                f"header mismatch in {path}: expected {','.join(expected)}, got {','.join(header)}"
            )
        rows: list[list[float]] = []
        for number, record in enumerate(reader, start=1):
            if not record or all(not cell.strip() for cell in record):
                continue
            if len(record) != len(header):
                raise DatasetError(
                    f"row {number}: expected {len(header)} fields, found {len(record)}"
                )
            rows.append(
                [_parse_cell(record[i], number, column) for i, column in enumerate(expected)]
            )
    if not rows:
        raise DatasetError(f"{path} has a header but no data rows")
    return rows


def _check_records(
    rows: Sequence[Sequence[float]], record: type[Conditions], columns: Sequence[str]
) -> None:
    for number, row in enumerate(rows, start=1):
        try:
            record(**dict(zip(columns, row)))
        except ValidationError as exc:
            problems = "; ".join(
                f"{'.'.join(str(part) for part in err['loc'])}: {err['msg']}"
                for err in exc.errors()
            )
            raise DatasetError(f"row {number}: {problems}") from None


def load_csv(path: Path, schema: Schema = DOMAIN_SCHEMA) -> Dataset:
    """Load a dataset in file order; errors name the offending row and column."""
    rows = _read_rows(path, schema.columns)
    if schema == DOMAIN_SCHEMA:
        _check_records(rows, Sample, schema.columns)
    table = np.array(rows, dtype=np.float64)
    dataset = Dataset(
        features=table[:, :-1],
        targets=table[:, -1],
        feature_names=schema.feature_names,
        target_name=schema.target_name,
        source=str(path),
    )
    logger.info("dataset.loaded", path=str(path), rows=len(dataset))
    return dataset


def load_feature_csv(
    path: Path, feature_names: Sequence[str] = DOMAIN_SCHEMA.feature_names
) -> FloatArray:
    """Load condition columns only; a trailing target column is tolerated and ignored."""
    rows = _read_rows(path, tuple(feature_names), allow_extra=True)
    if tuple(feature_names) == DOMAIN_SCHEMA.feature_names:
        _check_records(rows, Conditions, DOMAIN_SCHEMA.feature_names)
    return np.array(rows, dtype=np.float64).reshape(len(rows), len(feature_names))


def write_dataset_csv(dataset: Dataset, path: Path) -> None:
    """Write a dataset with ``repr`` floats so reloading reproduces it exactly."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(dataset.schema.columns)
        for row, target in zip(dataset.features, dataset.targets):
            writer.writerow([repr(float(value)) for value in (*row, target)])


def split_indices(n: int, spec: SplitSpec) -> tuple[NDArray[np.int64], NDArray[np.int64]]:
    """Partition ``range(n)`` into sorted train and test index arrays."""
    if n < 2:
        raise DatasetError(f"need at least 2 samples to split, got {n}")
    n_train = min(max(round_half_up(spec.train_fraction * n), 1), n - 1)
    order = np.random.default_rng(spec.seed).permutation(n)
    train = np.sort(order[:n_train])
    test = np.sort(order[n_train:])
    return train, test


def split(dataset: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    train_idx, test_idx = split_indices(len(dataset), spec)
    logger.debug(
        "dataset.split", seed=spec.seed, train=len(train_idx), test=len(test_idx)
    )
    return dataset.subset(train_idx, "train"), dataset.subset(test_idx, "test")


@dataclass(frozen=True, slots=True)
class Normalizer:
    """Per-feature z-score map; standard deviations use the population convention."""

    mean: FloatArray
    std: FloatArray
    feature_names: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        mean = _frozen(self.mean, 1)
        std = _frozen(self.std, 1)
        if mean.shape != std.shape:
            raise DatasetError("normalizer mean and std must have the same length")
        if not (np.isfinite(mean).all() and np.isfinite(std).all()) or (std <= 0).any():
            raise DatasetError("normalizer statistics must be finite with std > 0")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def dimension(self) -> int:
        return int(self.mean.shape[0])

    def transform(self, values: ArrayLike) -> FloatArray:
        array = np.asarray(values, dtype=np.float64)
        if array.shape[-1] != self.dimension:
            raise ValueError(
                f"expected {self.dimension} features, got {array.shape[-1]}"
            )
        return (array - self.mean) / self.std

    def inverse_transform(self, values: ArrayLike) -> FloatArray:
        array = np.asarray(values, dtype=np.float64)
        if array.shape[-1] != self.dimension:
            raise ValueError(
                f"expected {self.dimension} features, got {array.shape[-1]}"
            )
        return array * self.std + self.mean


def fit_normalizer(train: Dataset) -> Normalizer:
    """Fit z-score statistics on the training partition only."""
    if len(train) == 0:
        raise DatasetError("cannot fit a normalizer on an empty dataset")
    mean = train.features.mean(axis=0)
    std = train.features.std(axis=0, ddof=0)
    for name, column, deviation in zip(train.feature_names, train.features.T, std):
        if deviation == 0 or np.all(column == column[0]):
            raise ZeroVarianceError(name)
    return Normalizer(mean=mean, std=std, feature_names=train.feature_names)
