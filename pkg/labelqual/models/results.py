from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

_TOL = 1e-9


class MetricName(str, Enum):
    PCT_AGREE = 'pct_agree'
    PCT_AGREE_WITHIN1 = 'pct_agree_within1'
    COHEN_KAPPA = 'cohen_kappa'
    QWK = 'qwk'
    PEARSON_R = 'pearson_r'
    SPEARMAN_RHO = 'spearman_rho'
    KENDALL_TAU = 'kendall_tau'
    ICC = 'icc'
    ADJ_ICC = 'adj_icc'

    @property
    def bounds(self) -> Tuple[float, float]:
        if self in (MetricName.PCT_AGREE, MetricName.PCT_AGREE_WITHIN1, MetricName.ICC, MetricName.ADJ_ICC):
            return 0.0, 1.0
        return -1.0, 1.0


AGREEMENT_METRICS = (MetricName.PCT_AGREE, MetricName.PCT_AGREE_WITHIN1, MetricName.COHEN_KAPPA, MetricName.QWK)
CORRELATION_METRICS = (MetricName.PEARSON_R, MetricName.SPEARMAN_RHO, MetricName.KENDALL_TAU)
ICC_METRICS = (MetricName.ICC, MetricName.ADJ_ICC)


class MetricResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    metric: MetricName
    estimate: Optional[float] = None
    ci_low: Optional[float] = None
    ci_high: Optional[float] = None
    n_pairs: int = 0
    reason: Optional[str] = None
    failures: int = 0
    degenerate: bool = False

    @property
    def defined(self) -> bool:
        return self.estimate is not None

    @model_validator(mode='after')
    def check_range(self) -> 'MetricResult':
        if self.estimate is None:
            if self.reason is None:
                raise ValueError(f"undefined {self.metric.value} needs a reason")
            return self

        low, high = self.metric.bounds
        for value in (self.estimate, self.ci_low, self.ci_high):
            if value is not None and not (low - _TOL <= value <= high + _TOL):
                raise ValueError(f"{self.metric.value}={value} outside [{low}, {high}]")
        return self

    @classmethod
    def undefined(cls, metric: MetricName, reason: str, n_pairs: int = 0, failures: int = 0) -> 'MetricResult':
        return cls(metric=metric, reason=reason, n_pairs=n_pairs, failures=failures)


class VarianceDesign(str, Enum):
    RxOI = 'rxoi'
    RxSOI = 'rxsoi'
    JxRxSOI = 'jxrxsoi'
    JxRxOI = 'jxrxoi'

    @property
    def terms(self) -> Tuple[str, ...]:
        return DESIGN_TERMS[self]

    @property
    def by_item(self) -> bool:
        return self in (VarianceDesign.RxOI, VarianceDesign.RxSOI)

    def relative_error_terms(self) -> Tuple[str, ...]:
        return tuple(t for t in self.terms if t != 'i' and 'teacher' in TERM_FACETS[t]) + (RESIDUAL,)

    def absolute_error_terms(self) -> Tuple[str, ...]:
        return tuple(t for t in self.terms if t != 'i') + (RESIDUAL,)


RESIDUAL = 'residual'

# term -> the facet columns whose joint levels define the random effect
TERM_FACETS: Dict[str, Tuple[str, ...]] = {
    'i': ('teacher',),
    'o:i': ('teacher', 'observation_id'),
    's:o:i': ('teacher', 'observation_id', 'segment_index'),
    'r': ('rater_id',),
    'ir': ('teacher', 'rater_id'),
    'j': ('item_id',),
    'ro:i': ('teacher', 'observation_id', 'rater_id'),
    'ij': ('teacher', 'item_id'),
    'jo:i': ('teacher', 'observation_id', 'item_id'),
    'jr': ('rater_id', 'item_id'),
    'ijr': ('teacher', 'item_id', 'rater_id'),
}

_JXRXOI = ('i', 'o:i', 'r', 'j', 'ir', 'ro:i', 'ij', 'jo:i', 'jr', 'ijr')

DESIGN_TERMS: Dict[VarianceDesign, Tuple[str, ...]] = {
    VarianceDesign.RxOI: ('i', 'o:i', 'r', 'ir'),
    VarianceDesign.RxSOI: ('i', 'o:i', 's:o:i', 'r', 'ir'),
    VarianceDesign.JxRxOI: _JXRXOI,
    VarianceDesign.JxRxSOI: _JXRXOI + ('s:o:i',),
}


class VarianceComponents(BaseModel):
    model_config = ConfigDict(frozen=True)

    components: Dict[str, float]
    grand_mean: float
    n_obs: int
    converged: bool = True
    iterations: int = 0
    log_likelihood: Optional[float] = None
    truncated: List[str] = Field(default_factory=list)
    folded: List[str] = Field(default_factory=list)
    design: Optional[VarianceDesign] = None

    @model_validator(mode='after')
    def check_components(self) -> 'VarianceComponents':
        if RESIDUAL not in self.components:
            raise ValueError("residual component missing")
        if any(v < 0 for v in self.components.values()):
            raise ValueError("variance components must be nonnegative")
        if self.design is not None and set(self.components) != set(self.design.terms) | {RESIDUAL}:
            raise ValueError(f"components {sorted(self.components)} do not match design {self.design.value}")
        return self

    def __getitem__(self, term: str) -> float:
        return self.components.get(term, 0.0)

    @property
    def total(self) -> float:
        return float(sum(self.components.values()))


class GStudyResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    item: Optional[str]
    family: str
    design: VarianceDesign
    components: VarianceComponents
    erho2: float = Field(ge=0.0, le=1.0)
    phi: float = Field(ge=0.0, le=1.0)
    degenerate: bool = False

    @model_validator(mode='after')
    def check_phi(self) -> 'GStudyResult':
        if self.phi > self.erho2 + _TOL:
            raise ValueError(f"dependability {self.phi} exceeds generalizability {self.erho2}")
        return self


class DisattenuationResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    item: str
    family_a: str
    family_b: str
    raw_corr: Optional[float] = None
    raw_ci: Optional[Tuple[float, float]] = None
    disattenuated: Optional[float] = None
    disattenuated_ci: Optional[Tuple[float, float]] = None
    erho2_a: Optional[float] = None
    erho2_b: Optional[float] = None
    n_teacher_pairs: int = 0
    n_degenerate: int = 0
    low_n: bool = False
    inestimable: bool = False
    incalculable: bool = False
    spurious_flag: bool = False
    overunity_flag: bool = False
    ci_method: str = 'teacher-bootstrap-percentile'
    reason: Optional[str] = None

    @model_validator(mode='after')
    def check_flags(self) -> 'DisattenuationResult':
        if self.disattenuated is not None and self.overunity_flag != (abs(self.disattenuated) > 1.0):
            raise ValueError("overunity_flag must be set iff |disattenuated| > 1")
        if self.inestimable != (self.erho2_a is None or self.erho2_b is None):
            raise ValueError("inestimable must be set iff a reliability is missing")
        if self.disattenuated_ci is None and self.disattenuated is not None and self.reason is None:
            raise ValueError("a disattenuated correlation without an interval needs a reason")
        return self

    @property
    def flags(self) -> List[str]:
        names = ('inestimable', 'incalculable', 'spurious_flag', 'overunity_flag', 'low_n')
        return [n.replace('_flag', '') for n in names if getattr(self, n)]


class DStudyResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    label: str
    n_obs: int
    phi_tilde: float = Field(ge=0.0, le=1.0)
    universe_variance: float
    absolute_errors: Dict[str, float]
    human_minutes: float
    model_observation_minutes: float = 0.0
