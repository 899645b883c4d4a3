"""
Configuration management for fixiter
"""
from typing import Optional

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Toolkit settings, read from FIXITER_* environment variables or .env"""

    model_config = SettingsConfigDict(
        env_prefix="FIXITER_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )

    log_level: str = Field(default="WARNING")

    # Stop rule defaults
    max_iters: int = Field(default=100, ge=1)
    abs_tol: float = Field(default=1e-12, ge=0.0)

    # Table output
    table_decimals: int = Field(default=9, ge=0, le=17)

    # Rate comparison
    rate_tail_window: int = Field(default=5, ge=1)
    rate_fast_threshold: float = Field(default=0.1, gt=0.0)
    rate_slow_threshold: float = Field(default=10.0, gt=0.0)
    rate_same_low: float = Field(default=0.5, gt=0.0)
    rate_same_high: float = Field(default=2.0, gt=0.0)
    rate_stability_factor: float = Field(default=2.0, ge=1.0)
    rate_error_floor: float = Field(default=1e-12, ge=0.0)

    # Statistical contract checks (contraction factor, approximate operators)
    sample_count: int = Field(default=100, ge=1)
    sample_seed: int = Field(default=20150611)
    contraction_slack: float = Field(default=1e-12, ge=0.0)
    approximation_slack: float = Field(default=1e-12, ge=0.0)

    # Data dependence
    datadep_slack: float = Field(default=1e-9, ge=0.0)

    # Fixed point estimation for maps without a known fixed point
    fixed_point_search_iters: int = Field(default=10000, ge=1)
    fixed_point_search_tol: float = Field(default=1e-15, ge=0.0)

    # Delay differential equations
    dde_samples: int = Field(default=200, ge=1)
    dde_sample_radius: float = Field(default=10.0, gt=0.0)
    dde_continuity_step: float = Field(default=1e-7, gt=0.0)
    dde_continuity_tol: float = Field(default=1e-3, gt=0.0)
    dde_eta1: float = Field(default=0.5, ge=0.0, le=1.0)
    dde_eta2: float = Field(default=0.5, ge=0.0, le=1.0)
    dde_output_path: str = Field(default="solution.csv")

    # Default output path for table/compare/datadep artifacts (None = stdout)
    output_path: Optional[str] = Field(default=None)


# Singleton instance
_settings = None


def get_settings() -> Settings:
    """Get or create settings singleton"""
    global _settings
    if _settings is None:
        _settings = Settings()
    return _settings


def reset_settings():
    """Drop the settings singleton so the next call re-reads the environment"""
    global _settings
    _settings = None
