"""Configuration management using Pydantic settings."""

from typing import Literal

from pydantic_settings import BaseSettings, SettingsConfigDict


class SpdwaveSettings(BaseSettings):
    """Numerical tolerances and study defaults."""

    model_config = SettingsConfigDict(
        env_prefix="SPDWAVE_",
        env_file=".env",
        env_file_encoding="utf-8",
    )

    # Cyclic Jacobi eigensolver
    jacobi_max_sweeps: int = 100
    jacobi_tol: float = 1e-14  # relative to ||S||_F

    # Power iteration for the limit matrix E_inf
    limit_tol: float = 1e-13
    limit_max_iter: int = 200

    # Monte Carlo volumes
    volume_samples: int = 20000
    volume_stride: int = 32  # every n-th non-trimmed grid point
    volume_inflation: float = 0.05

    # Coverage studies
    boundary_trim: int = 100
    workers: int = 1

    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "WARNING"


settings = SpdwaveSettings()
