#!/usr/bin/env python3
"""
Runtime settings resolved from environment variables.

CLI flags override these values; the resolved settings are written into every
run manifest.
"""

import logging
import os

from pydantic import BaseModel, field_validator

logger = logging.getLogger(__name__)


class Settings(BaseModel):
    """Process-wide defaults"""
    threads: int = 1
    batch_size: int = 256
    ledger_path: str = "gnp_llt_runs.duckdb"
    log_level: str = "INFO"
    seed: int = 0

    @field_validator('threads', 'batch_size')
    def validate_positive(cls, v):
        """Worker and batch counts must be positive"""
        if v < 1:
            raise ValueError("must be a positive integer")
        return v

    @field_validator('log_level')
    def validate_log_level(cls, v):
        """Normalize and check the log level name"""
        v = v.upper()
        if not isinstance(logging.getLevelName(v), int):
            raise ValueError(f"Unknown log level {v}")
        return v

    @field_validator('seed')
    def validate_seed(cls, v):
        """Seeds are unsigned 64-bit"""
        if not 0 <= v < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")
        return v


def load_settings() -> Settings:
    """Build Settings from the GNP_LLT_* environment variables

    Returns:
        Validated settings
    """
    settings = Settings(
        threads=int(os.environ.get("GNP_LLT_THREADS", "1")),
        batch_size=int(os.environ.get("GNP_LLT_BATCH_SIZE", "256")),
        ledger_path=os.environ.get("GNP_LLT_LEDGER_PATH", "gnp_llt_runs.duckdb"),
        log_level=os.environ.get("GNP_LLT_LOG_LEVEL", "INFO"),
        seed=int(os.environ.get("GNP_LLT_SEED", "0")),
    )
    logger.debug(f"Loaded settings {settings.model_dump()}")
    return settings
