"""Synthetic reaction-yield surface used as a regenerable stand-in for laboratory data."""

from __future__ import annotations

import numpy as np
import structlog

from yieldnet.services.dataset import DOMAIN_SCHEMA, Dataset, FloatArray

logger = structlog.get_logger(__name__)

# (low, high) per condition, in DOMAIN_SCHEMA feature order
CONDITION_RANGES: tuple[tuple[float, float], ...] = (
    (4.0, 72.0),  # time_h
    (30.0, 70.0),  # temperature_c
    (20.0, 300.0),  # enzyme_mg
    (0.5, 3.0),  # molar_ratio
)
OPTIMUM = (40.0, 52.0, 180.0, 1.8)
WIDTHS = (28.0, 12.0, 120.0, 0.9)
BASE_YIELD = 12.0
PEAK_GAIN = 78.0
DEFAULT_FIXTURE_SEED = 20240517
DEFAULT_FIXTURE_SIZE = 150


def yield_surface(conditions: FloatArray) -> FloatArray:
    """Noise-free yield (%) for an (n, 4) array of conditions; maximal at ``OPTIMUM``."""
    x = np.atleast_2d(np.asarray(conditions, dtype=np.float64))
    z = (x - np.asarray(OPTIMUM)) / np.asarray(WIDTHS)
    # mild time/temperature interaction: hot reactions peak a little earlier
    bowl = np.sum(z * z, axis=1) + 0.3 * z[:, 0] * z[:, 1]
    return BASE_YIELD + PEAK_GAIN * np.exp(-0.5 * bowl)


def generate_yield_fixture(
    n: int = DEFAULT_FIXTURE_SIZE,
    seed: int = DEFAULT_FIXTURE_SEED,
    noise_sd: float = 2.0,
) -> Dataset:
    """Draw ``n`` uniform conditions, evaluate the surface and add seeded Gaussian noise.

    Yields are clipped to [0, 100].
    """
    if n < 1:
        raise ValueError(f"fixture size must be >= 1, got {n}")
    if noise_sd < 0 or not np.isfinite(noise_sd):
        raise ValueError(f"noise_sd must be finite and >= 0, got {noise_sd}")
    rng = np.random.default_rng(seed)
    low = np.array([bounds[0] for bounds in CONDITION_RANGES])
    high = np.array([bounds[1] for bounds in CONDITION_RANGES])
    conditions = rng.uniform(low, high, size=(n, len(CONDITION_RANGES)))
    targets = yield_surface(conditions) + rng.normal(0.0, noise_sd, size=n)
    dataset = Dataset(
        features=conditions,
        targets=np.clip(targets, 0.0, 100.0),
        feature_names=DOMAIN_SCHEMA.feature_names,
        target_name=DOMAIN_SCHEMA.target_name,
        source=f"fixture(seed={seed},n={n})",
    )
    logger.debug("fixture.generated", n=n, seed=seed, noise_sd=noise_sd)
    return dataset
