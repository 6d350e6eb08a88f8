"""
Application configuration
"""
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Settings loaded from environment (HGFC_ prefix) and .env"""

    # Environment
    environment: str = "development"
    log_level: str = "INFO"
    log_format: str = "console"  # console | json

    # Numerical tolerances
    feasibility_tolerance: float = 1e-7
    duality_tolerance: float = 1e-9
    raise_tolerance: float = 1e-12
    ratio_tolerance: float = 1e-6
    commensurate_tolerance: float = 1e-9

    # Oracles
    brute_force_max_slots: int = 10
    max_speed_denominator: int = 64

    # Curvature / stretch sups
    grid_points_per_decade: int = 256
    grid_decades: int = 6
    curvature_divergence_bound: float = 1e6

    # Online runs
    warm_start: bool = True

    # Experiments
    workers: int = 1
    output_dir: str = "results"

    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="HGFC_",
        case_sensitive=False,
        extra="allow"
    )


# Global settings instance
settings = Settings()
