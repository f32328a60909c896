"""Configuration helpers for yieldnet."""

from __future__ import annotations

import logging
import os
import sys

import structlog
from dotenv import load_dotenv
from pydantic import BaseModel, Field, field_validator


class Settings(BaseModel):
    """Runtime configuration loaded from env vars with sensible defaults."""

    log_level: str = "WARNING"
    seed: int = Field(default=42, ge=0, lt=2**64)
    jobs: int = Field(default=1, ge=1)
    tolerance: float = Field(default=0.30, gt=0)
    train_fraction: float = Field(default=0.65, gt=0, lt=1)

    @field_validator("log_level")
    @classmethod
    def _known_level(cls, value: str) -> str:
        level = value.upper()
        if level not in logging.getLevelNamesMapping():
            raise ValueError(f"unknown log level {value!r}")
        return level

    @classmethod
    def load(cls) -> "Settings":
        load_dotenv()
        return cls(
            log_level=os.environ.get("YIELDNET_LOG_LEVEL", "WARNING"),
            seed=int(os.environ.get("YIELDNET_SEED", "42")),
            jobs=int(os.environ.get("YIELDNET_JOBS", "1")),
            tolerance=float(os.environ.get("YIELDNET_TOLERANCE", "0.30")),
            train_fraction=float(os.environ.get("YIELDNET_TRAIN_FRACTION", "0.65")),
        )


def get_settings() -> Settings:
    """Convenience accessor for lazy modules."""
    return Settings.load()


def configure_logging(level: str = "WARNING") -> None:
    """Route structlog events to stderr, filtered at ``level``."""
    structlog.configure(
        processors=[
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.dev.ConsoleRenderer(colors=False),
        ],
        wrapper_class=structlog.make_filtering_bound_logger(
            logging.getLevelNamesMapping()[level.upper()]
        ),
        # sys.stderr is looked up per logger; test runners swap it after configuration
        logger_factory=lambda *_: structlog.PrintLogger(file=sys.stderr),
        cache_logger_on_first_use=False,
    )
