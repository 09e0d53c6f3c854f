"""Validated runtime settings for the nctorus laboratory."""

from __future__ import annotations

from pathlib import Path
from typing import Literal

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class LabSettings(BaseSettings):
    """Settings loaded from environment variables."""

    model_config = SettingsConfigDict(extra="ignore")

    output_dir: Path = Field(default=Path("results"), alias="NCTORUS_OUTPUT_DIR")
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = Field(
        default="INFO",
        alias="NCTORUS_LOG_LEVEL",
    )
    max_concurrency: int = Field(
        default=4,
        alias="NCTORUS_MAX_CONCURRENCY",
        ge=1,
        le=32,
    )
    spectrum_cache_entries: int = Field(
        default=16,
        alias="NCTORUS_SPECTRUM_CACHE_ENTRIES",
        ge=1,
    )
    fit_residual_threshold: float = Field(
        default=1e-6,
        alias="NCTORUS_FIT_RESIDUAL_THRESHOLD",
        gt=0,
    )
    eigen_reconstruction_tol: float = Field(
        default=1e-9,
        alias="NCTORUS_EIGEN_RECONSTRUCTION_TOL",
        gt=0,
    )
    default_dt: float = Field(default=1e-3, alias="NCTORUS_DEFAULT_DT", gt=0)
    quadrature_substeps: int = Field(
        default=200,
        alias="NCTORUS_QUADRATURE_SUBSTEPS",
        ge=2,
    )
    record_wall_time: bool = Field(default=False, alias="NCTORUS_RECORD_WALL_TIME")
