from pathlib import Path
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

LABELQUAL_VERSION = "0.2.0"


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="LABELQUAL_", env_file='.env', extra='ignore')

    human_family: str = "human"
    log_level: str = "INFO"
    threads: int = 1

    bootstrap_replicates: int = 1000
    alpha: float = 0.05

    em_tolerance: float = 1e-6
    em_max_iterations: int = 500

    # d-study time accounting, minutes
    class_minutes: float = 60.0
    hil_human_minutes: float = 15.0
    segment_minutes: float = 7.5

    low_n_teachers: int = 10
    spurious_threshold: float = 0.1
    severity_sd: float = 0.5

    hrm_chains: int = 4
    hrm_iterations: int = 4000
    hrm_burn_in: int = 2000
    hrm_thin: int = 1


settings = Settings()


class RunConfig(BaseModel):
    """Validated global command-line flags."""
    model_config = ConfigDict(frozen=True)

    command: str
    ratings: Optional[Path] = None
    scale: Optional[Path] = None
    roster: Optional[Path] = None
    attributes: Optional[Path] = None
    seed: int
    alpha: float = Field(default_factory=lambda: settings.alpha, gt=0.0, lt=1.0)
    threads: int = Field(default_factory=lambda: settings.threads, ge=1)
    out: Path = Path('.')
    log_level: str = Field(default_factory=lambda: settings.log_level)

    @field_validator('log_level')
    @classmethod
    def check_level(cls, level: str) -> str:
        level = level.upper()
        if level not in ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'):
            raise ValueError(f"unknown log level {level}")
        return level

    @property
    def has_dataset(self) -> bool:
        return None not in (self.ratings, self.scale, self.roster)
