from pydantic_settings import BaseSettings
from pydantic import Field
from pathlib import Path

# Get absolute path to project root (.env location)
_CONFIG_DIR = Path(__file__).parent.parent
_ENV_FILE = _CONFIG_DIR / ".env"


class Settings(BaseSettings):
    """Run-time settings loaded from environment variables (and an optional .env)"""

    # Logging
    log_level: str = Field("INFO", alias="LOG_LEVEL")
    # Empty string disables the rotating file sink
    log_file: str = Field("logs/randadj.log", alias="RANDADJ_LOG_FILE")

    # Parallelism - caps the worker pool used by Monte Carlo and the FRT
    threads: int = Field(1, alias="RANDADJ_THREADS", ge=1)

    # Least squares
    # Relative residual-norm threshold for left-to-right collinearity pruning
    rel_tol: float = Field(1e-10, alias="RANDADJ_REL_TOL", gt=0)
    hc_flavor: str = Field("hc0", alias="RANDADJ_HC_FLAVOR")

    # Missingness-pattern method
    mp_fallback: str = Field("neyman", alias="RANDADJ_MP_FALLBACK")
    # Above this many covariates the Kronecker feature block only logs a warning
    mp_max_covariates: int = Field(12, alias="RANDADJ_MP_MAX_COVARIATES")

    # Inference
    ci_level: float = Field(0.95, alias="RANDADJ_CI_LEVEL", gt=0, lt=1)
    frt_draws: int = Field(2000, alias="RANDADJ_FRT_DRAWS", ge=1)
    frt_min_valid_share: float = Field(0.10, alias="RANDADJ_FRT_MIN_VALID_SHARE")

    # Monte Carlo
    mc_batches: int = Field(20, alias="RANDADJ_MC_BATCHES", ge=2)
    mc_max_failure_share: float = Field(0.5, alias="RANDADJ_MC_MAX_FAILURE_SHARE")
    default_seed: int = Field(20240501, alias="RANDADJ_SEED")

    class Config:
        # Use absolute path to ensure .env is found regardless of working directory
        env_file = str(_ENV_FILE)
        env_file_encoding = "utf-8"
        case_sensitive = False
        extra = "ignore"  # Ignore extra fields in .env


# Global settings instance
settings = Settings()
