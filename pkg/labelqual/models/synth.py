from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .results import RESIDUAL

PLANTED_TERMS = ('i', 'o:i', 's:o:i', 'r', 'ir', RESIDUAL)
RATER_TERMS = ('r', 'ir', RESIDUAL)


class SynthMode(str, Enum):
    GSTUDY = 'gstudy'
    HRM = 'hrm'


class Assignment(str, Enum):
    DENSE = 'dense'
    SPARSE = 'sparse'


def _check_variances(values: Dict[str, float], allowed) -> Dict[str, float]:
    for term, value in values.items():
        if term not in allowed:
            raise ValueError(f"unknown variance term {term!r}; expected one of {allowed}")
        if value < 0:
            raise ValueError(f"planted variance for {term} must be nonnegative")
    return values


class FamilySpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    raters: int = Field(default=4, ge=1)
    # scale the shared teacher and lesson/segment draws; weight 0 on the teacher makes a family blind to teachers
    teacher_weight: float = 1.0
    lesson_weight: float = 1.0
    mean_shift: float = 0.0
    # overrides the planted r, ir and residual variances for this family
    variances: Dict[str, float] = Field(default_factory=dict)

    @field_validator('variances')
    @classmethod
    def check_variances(cls, values: Dict[str, float]) -> Dict[str, float]:
        return _check_variances(values, RATER_TERMS)


class GStudyPlant(BaseModel):
    model_config = ConfigDict(frozen=True)

    mean: Optional[float] = None
    variances: Dict[str, float] = Field(default_factory=lambda: {'i': 2.0, 'o:i': 1.0, 's:o:i': 0.0, 'r': 2.0,
                                                                 'ir': 1.0, RESIDUAL: 1.0})

    @field_validator('variances')
    @classmethod
    def check_variances(cls, values: Dict[str, float]) -> Dict[str, float]:
        _check_variances(values, PLANTED_TERMS)
        return {t: float(values.get(t, 0.0)) for t in PLANTED_TERMS}


class HrmPlant(BaseModel):
    model_config = ConfigDict(frozen=True)

    dimensions: int = Field(default=1, ge=1)
    item_dimensions: Optional[List[int]] = None
    alpha: Optional[List[float]] = None
    gamma: Optional[List[List[float]]] = None
    theta_sd: float = Field(default=0.5, ge=0)
    phi: Dict[str, float] = Field(default_factory=dict)
    psi2: Dict[str, float] = Field(default_factory=dict)
    default_psi2: float = Field(default=1.0, gt=0)
    delta: Dict[str, Dict[str, float]] = Field(default_factory=dict)
    attribute: str = 'race'
    attribute_levels: Dict[str, float] = Field(default_factory=dict)

    @model_validator(mode='after')
    def check_plant(self) -> 'HrmPlant':
        if any(v <= 0 for v in self.psi2.values()):
            raise ValueError("planted psi2 must be positive")
        if self.attribute_levels and abs(sum(self.attribute_levels.values()) - 1.0) > 1e-9:
            raise ValueError("attribute level probabilities must sum to 1")
        if any(p < 0 for p in self.attribute_levels.values()):
            raise ValueError("attribute level probabilities must be nonnegative")
        if self.alpha is not None and any(a <= 0 for a in self.alpha):
            raise ValueError("planted discriminations must be positive")
        return self


class SynthSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    mode: SynthMode = SynthMode.GSTUDY
    seed: int = 0
    teachers: int = Field(default=50, ge=2)
    lessons: int = Field(default=4, ge=1)
    segments: int = Field(default=2, ge=1)
    items: int = Field(default=1, ge=1)
    categories: int = Field(default=5, ge=2)
    year: str = 'Y1'
    assignment: Assignment = Assignment.DENSE
    raters_per_cell: int = Field(default=2, ge=1)
    families: List[FamilySpec] = Field(default_factory=lambda: [FamilySpec(name='human')])
    gstudy: GStudyPlant = Field(default_factory=GStudyPlant)
    hrm: HrmPlant = Field(default_factory=HrmPlant)

    @model_validator(mode='after')
    def check_spec(self) -> 'SynthSpec':
        names = [f.name for f in self.families]
        if len(set(names)) != len(names):
            raise ValueError("family names must be unique")
        if self.assignment == Assignment.SPARSE and any(f.raters < self.raters_per_cell for f in self.families):
            raise ValueError("sparse assignment needs at least raters_per_cell raters in every family")
        if self.hrm.item_dimensions is not None and len(self.hrm.item_dimensions) != self.items:
            raise ValueError("item_dimensions needs one entry per item")
        if self.hrm.alpha is not None and len(self.hrm.alpha) != self.items:
            raise ValueError("alpha needs one entry per item")
        if self.hrm.gamma is not None and (len(self.hrm.gamma) != self.items or
                                           any(len(g) != self.categories for g in self.hrm.gamma)):
            raise ValueError("gamma needs one row of K steps per item")
        return self

    def rater_ids(self, family: FamilySpec) -> List[str]:
        return [f"{family.name}-{k + 1:02d}" for k in range(family.raters)]

    def item_ids(self) -> List[str]:
        return [f"item{j + 1:02d}" for j in range(self.items)]
