import os
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, Field


class AppConfig(BaseModel):
    """Global application configuration."""

    block_cap: int = Field(2_000_000, gt=0, description="Maximum number of type-class blocks per tensor power")
    log_level: str = "WARNING"
    log_file: Optional[Path] = None
    max_workers: int = Field(4, gt=0)
    root_xtol: float = 1e-12
    quad_epsabs: float = 1e-10
    fidelity_slack: float = 1e-12  # accepted shortfall when comparing a fidelity against nu
    float_digits: int = 12

    @classmethod
    def from_env(cls) -> "AppConfig":
        """Load from environment variables."""
        defaults = cls.model_fields
        log_file = os.getenv("RNC_LOG_FILE")
        return cls(
            block_cap=os.getenv("RNC_BLOCK_CAP", defaults["block_cap"].default),
            log_level=os.getenv("RNC_LOG_LEVEL", os.getenv("LOG_LEVEL", defaults["log_level"].default)),
            log_file=Path(log_file) if log_file else None,
            max_workers=os.getenv("RNC_MAX_WORKERS", defaults["max_workers"].default),
        )
