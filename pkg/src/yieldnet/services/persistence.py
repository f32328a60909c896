"""Versioned JSON container for trained GRNN, MLFN and SVR models.

All floating-point values are stored as C99 hex strings (``float.hex``) so a saved model
reproduces its predictions bit for bit. See ``docs/model-format.md`` for the field layout.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np
import structlog
from pydantic import BaseModel, Field, ValidationError

from yieldnet import __version__
from yieldnet.models import ModelKind, SvrConfig
from yieldnet.services.dataset import Normalizer
from yieldnet.services.grnn import GrnnModel
from yieldnet.services.harness import TrainedModel
from yieldnet.services.mlfn import MlfnModel, MlfnTopology, TargetScaler
from yieldnet.services.svr import SvrModel
from yieldnet.utils import decode_floats, encode_floats, sha256_bytes

logger = structlog.get_logger(__name__)

FORMAT_VERSION = 1
SUPPORTED_VERSIONS = frozenset({FORMAT_VERSION})


class ModelFormatError(ValueError):
    """Raised when a model file cannot be decoded into a valid model."""


class ChecksumMismatchError(ModelFormatError):
    pass


class UnsupportedVersionError(ModelFormatError):
    def __init__(self, version: object) -> None:
        super().__init__(
            f"unsupported model format version {version!r}; "
            f"this build reads {sorted(SUPPORTED_VERSIONS)}"
        )
        self.version = version


class NormalizerBlock(BaseModel):
    feature_names: list[str]
    mean: list[str]
    std: list[str]


class Provenance(BaseModel):
    dataset_source: str = ""
    split_seed: int | None = None
    training_config: dict[str, Any] = Field(default_factory=dict)
    library_version: str = __version__
    target_range: float | None = None


class ModelFile(BaseModel):
    format_version: int = FORMAT_VERSION
    kind: ModelKind
    normalizer: NormalizerBlock
    params: dict[str, Any]
    provenance: Provenance = Field(default_factory=Provenance)
    checksum: str = ""

    def canonical_payload(self) -> bytes:
        """Everything except the checksum, as sorted compact JSON."""
        body = self.model_dump(mode="json", exclude={"checksum"})
        return json.dumps(body, sort_keys=True, separators=(",", ":")).encode("utf-8")

    def sealed(self) -> "ModelFile":
        return self.model_copy(update={"checksum": sha256_bytes(self.canonical_payload())})


def _rows(matrix: np.ndarray) -> list[list[str]]:
    return [encode_floats(row) for row in matrix]


def _hex(value: float) -> str:
    return float(value).hex()


def _unhex(value: str) -> float:
    return float.fromhex(value)


def _encode_normalizer(normalizer: Normalizer) -> NormalizerBlock:
    return NormalizerBlock(
        feature_names=list(normalizer.feature_names),
        mean=encode_floats(normalizer.mean),
        std=encode_floats(normalizer.std),
    )


def _encode_params(model: TrainedModel) -> dict[str, Any]:
    if isinstance(model, GrnnModel):
        return {
            "sigma": _hex(model.sigma),
            "patterns": _rows(model.patterns),
            "targets": encode_floats(model.targets),
        }
    if isinstance(model, MlfnModel):
        return {
            "layer_sizes": list(model.topology.layer_sizes),
            "parameters": encode_floats(model.parameter_vector()),
            "target_slope": _hex(model.target_scaler.slope),
            "target_offset": _hex(model.target_scaler.offset),
        }
    cfg = model.config
    return {
        "C": _hex(cfg.C),
        "epsilon": _hex(cfg.epsilon),
        "gamma": _hex(cfg.gamma),
        "tol": _hex(cfg.tol),
        "max_passes": cfg.max_passes,
        "support_vectors": _rows(model.support_vectors),
        "dual_coef": encode_floats(model.dual_coef),
        "bias": _hex(model.bias),
        "support_indices": list(model.support_indices),
        "converged": model.converged,
        "iterations": model.iterations,
        "objective": _hex(model.objective),
    }


def save_model(model: TrainedModel, path: Path, provenance: Provenance | None = None) -> ModelFile:
    """Write ``model`` to ``path`` as a sealed, self-describing JSON document."""
    document = ModelFile(
        kind=model.kind,
        normalizer=_encode_normalizer(model.normalizer),
        params=_encode_params(model),
        provenance=provenance or Provenance(),
    ).sealed()
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(document.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info("persistence.saved", path=str(path), kind=model.kind.value)
    return document


def _decode_normalizer(block: NormalizerBlock) -> Normalizer:
    return Normalizer(
        mean=np.array(decode_floats(block.mean)),
        std=np.array(decode_floats(block.std)),
        feature_names=tuple(block.feature_names),
    )


def _matrix(rows: list[list[str]], width: int) -> np.ndarray:
    return np.array([decode_floats(row) for row in rows], dtype=np.float64).reshape(-1, width)


def _decode_model(document: ModelFile) -> TrainedModel:
    normalizer = _decode_normalizer(document.normalizer)
    params = document.params
    if document.kind is ModelKind.GRNN:
        return GrnnModel(
            patterns=_matrix(params["patterns"], normalizer.dimension),
            targets=np.array(decode_floats(params["targets"])),
            sigma=_unhex(params["sigma"]),
            normalizer=normalizer,
        )
    if document.kind is ModelKind.MLFN:
        topology = MlfnTopology(tuple(params["layer_sizes"]))
        scaler = TargetScaler(
            slope=_unhex(params["target_slope"]), offset=_unhex(params["target_offset"])
        )
        shell = MlfnModel(
            topology=topology,
            weights=tuple(np.zeros(shape) for shape in topology.weight_shapes),
            thresholds=tuple(np.zeros(rows) for rows, _ in topology.weight_shapes),
            normalizer=normalizer,
            target_scaler=scaler,
        )
        return shell.with_parameters(np.array(decode_floats(params["parameters"])))
    config = SvrConfig(
        C=_unhex(params["C"]),
        epsilon=_unhex(params["epsilon"]),
        gamma=_unhex(params["gamma"]),
        tol=_unhex(params["tol"]),
        max_passes=params["max_passes"],
    )
    return SvrModel(
        support_vectors=_matrix(params["support_vectors"], normalizer.dimension),
        dual_coef=np.array(decode_floats(params["dual_coef"])),
        bias=_unhex(params["bias"]),
        config=config,
        normalizer=normalizer,
        support_indices=tuple(int(index) for index in params["support_indices"]),
        converged=bool(params["converged"]),
        iterations=int(params["iterations"]),
        objective=_unhex(params["objective"]),
    )


def read_model_file(path: Path) -> ModelFile:
    """Parse and verify a model file without building the model."""
    if not path.is_file():
        raise ModelFormatError(f"model file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"{path} is not a model file: {exc}") from None
    if not isinstance(raw, dict):
        raise ModelFormatError(f"{path} is not a model file: top level must be an object")
    version = raw.get("format_version")
    if not isinstance(version, int) or isinstance(version, bool) or version not in SUPPORTED_VERSIONS:
        raise UnsupportedVersionError(version)
    try:
        document = ModelFile.model_validate(raw)
    except ValidationError as exc:
        raise ModelFormatError(f"{path}: {exc}") from None
    expected = sha256_bytes(document.canonical_payload())
    if document.checksum != expected:
        raise ChecksumMismatchError(
            f"checksum mismatch in {path}: stored {document.checksum[:12]}..., "
            f"computed {expected[:12]}..."
        )
    return document


def load_model(path: Path) -> TrainedModel:
    """Load a model saved by :func:`save_model`; any defect is a :class:`ModelFormatError`."""
    document = read_model_file(path)
    try:
        model = _decode_model(document)
    except (KeyError, TypeError, ValueError, ValidationError) as exc:
        raise ModelFormatError(f"{path}: invalid {document.kind.value} payload: {exc}") from None
    logger.info("persistence.loaded", path=str(path), kind=document.kind.value)
    return model
