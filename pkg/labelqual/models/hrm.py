import hashlib
from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..labelqual_config import settings


class HrmPriors(BaseModel):
    model_config = ConfigDict(frozen=True)

    # Gamma(shape, rate) on the precisions of rater bias and log-variability around their item means
    phi_shape: float = Field(default=1.0, gt=0)
    phi_rate: float = Field(default=1.0, gt=0)
    psi_shape: float = Field(default=1.0, gt=0)
    psi_rate: float = Field(default=1.0, gt=0)

    alpha_log_sd: float = Field(default=1.0, gt=0)
    gamma_sd: float = Field(default=2.0, gt=0)
    eta_sd: float = Field(default=1.0, gt=0)
    kappa_mean: float = -1.0
    kappa_sd: float = Field(default=2.0, gt=0)

    # Wishart on the latent precision; None means M + 1
    wishart_df: Optional[float] = None


class HrmConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    chains: int = Field(default_factory=lambda: settings.hrm_chains, ge=2)
    iterations: int = Field(default_factory=lambda: settings.hrm_iterations, ge=1)
    burn_in: int = Field(default_factory=lambda: settings.hrm_burn_in, ge=0)
    thin: int = Field(default_factory=lambda: settings.hrm_thin, ge=1)
    seed: int = 0
    families: Optional[List[str]] = None
    item_dimensions: Optional[Dict[str, int]] = None
    # discrimination fixed at 1; default is the first item of each dimension
    anchor_items: Optional[List[str]] = None
    covariate: Optional[str] = None
    freeze_true_scores: bool = False
    adapt_every: int = Field(default=50, ge=10)
    priors: HrmPriors = Field(default_factory=HrmPriors)

    @model_validator(mode='after')
    def check_schedule(self) -> 'HrmConfig':
        if self.burn_in >= self.iterations:
            raise ValueError(f"burn_in ({self.burn_in}) must be below iterations ({self.iterations})")
        if (self.iterations - self.burn_in) // self.thin < 1:
            raise ValueError("no draws are kept after burn-in and thinning")
        if self.item_dimensions is not None and any(m < 1 for m in self.item_dimensions.values()):
            raise ValueError("item dimensions start at 1")
        return self

    @property
    def kept_draws(self) -> int:
        return (self.iterations - self.burn_in) // self.thin

    def digest(self) -> str:
        return hashlib.sha256(self.model_dump_json().encode('utf-8')).hexdigest()


class SeverityClass(str, Enum):
    LENIENT = 'lenient'
    SEVERE = 'severe'
    NEUTRAL = 'neutral'


class RaterBiasSummary(BaseModel):
    model_config = ConfigDict(frozen=True)

    rater_id: str
    item_id: str
    level: str
    phi_mean: Optional[float] = None
    phi_ci: Optional[Tuple[float, float]] = None
    psi_mean: Optional[float] = None
    severity: Optional[SeverityClass] = None
    reason: Optional[str] = None

    @property
    def identified(self) -> bool:
        return self.phi_mean is not None


class FairnessContrast(BaseModel):
    model_config = ConfigDict(frozen=True)

    rater_id: str
    item_id: str
    focal: str
    reference: str
    delta_mean: Optional[float] = None
    delta_ci: Optional[Tuple[float, float]] = None
    independence_violation: bool = False
    reason: Optional[str] = None

    @model_validator(mode='after')
    def check_violation(self) -> 'FairnessContrast':
        if self.delta_ci is not None:
            excludes = self.delta_ci[0] > 0.0 or self.delta_ci[1] < 0.0
            if excludes != self.independence_violation:
                raise ValueError("independence_violation must be set iff the interval excludes 0")
        return self
