"""Small helpers for checksums, lossless float text, seeds and durations."""

from __future__ import annotations

import hashlib
import math
from collections.abc import Iterable, Sequence

import numpy as np


def sha256_bytes(payload: bytes) -> str:
    """Compute the SHA256 checksum for an in-memory payload."""
    return hashlib.sha256(payload).hexdigest()


def encode_floats(values: Iterable[float]) -> list[str]:
    """Encode floats as C99 hex literals so they survive text round trips exactly."""
    return [float(value).hex() for value in values]


def decode_floats(values: Sequence[str]) -> list[float]:
    return [float.fromhex(value) for value in values]


def derive_seed(base: int, *path: int) -> int:
    """Derive an independent 64-bit seed from ``base`` and a position such as (candidate, trial).

    The result depends only on its arguments, so work items can run in any order.
    """
    sequence = np.random.SeedSequence([base, *path])
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def format_duration(seconds: float) -> str:
    """Render a wall time as ``h:mm:ss`` (whole seconds, rounded half up)."""
    total = round_half_up(max(seconds, 0.0))
    hours, rest = divmod(total, 3600)
    minutes, secs = divmod(rest, 60)
    return f"{hours}:{minutes:02d}:{secs:02d}"
