"""
Decision studies: projected dependability of teacher scores under hypothetical rating designs.

A scenario lists rater families, each with its own variance components and its own (exclusive) counts of
observations, segments and raters, plus counts of observations and segments shared by every family.
Raters are never shared across families.
"""
import logging
from typing import Callable, Dict, Iterable, List, Optional

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .dataset import Dataset
from .errors import InfeasibleScenarioError
from .gtheory import fit_variance_components
from .labelqual_config import settings
from .models.results import RESIDUAL, DStudyResult, VarianceComponents, VarianceDesign

logger = logging.getLogger(__name__)


class FamilyCounts(BaseModel):
    model_config = ConfigDict(frozen=True)

    family: str
    components: VarianceComponents
    human: bool = True
    n_o: int = Field(default=0, ge=0)
    n_s: int = Field(default=0, ge=0)
    n_r: int = Field(default=1, ge=0)


class DStudyScenario(BaseModel):
    model_config = ConfigDict(frozen=True)

    label: str
    families: List[FamilyCounts]
    shared_o: int = Field(default=0, ge=0)
    shared_s: int = Field(default=0, ge=0)

    @model_validator(mode='after')
    def check_families(self) -> 'DStudyScenario':
        if not self.families:
            raise ValueError("a scenario needs at least one family")
        return self

    def effective(self, counts: FamilyCounts) -> Dict[str, int]:
        return {'o': counts.n_o + self.shared_o, 's': counts.n_s + self.shared_s, 'r': counts.n_r}


def absolute_error(vc: VarianceComponents, n_o: int, n_s: int, n_r: int) -> float:
    """
    Error variance of a teacher's mean score over n_o observations of n_s segments each, scored by n_r raters.
    A term with positive variance whose divisor contains a zero count makes the scenario infeasible.
    """
    terms = (
        ('r', (n_r,)),
        ('o:i', (n_o,)),
        ('ir', (n_r,)),
        ('s:o:i', (n_s, n_o)),
        (RESIDUAL, (n_s, n_o, n_r)),
    )
    error = 0.0
    for term, counts in terms:
        variance = vc[term]
        if variance == 0.0:
            continue
        divisor = 1
        for count in counts:
            divisor *= count
        if divisor < 1:
            raise InfeasibleScenarioError(f"term {term} has variance {variance:.4g} but a zero count in {counts}")
        error += variance / divisor
    return error


def phi_tilde(scenario: DStudyScenario, segment_minutes: Optional[float] = None) -> DStudyResult:
    segment_minutes = settings.segment_minutes if segment_minutes is None else segment_minutes
    universe = 0.0
    errors = dict()
    human_minutes = 0.0
    model_minutes = 0.0
    n_obs = 0
    for counts in scenario.families:
        n = scenario.effective(counts)
        universe += counts.components['i']
        errors[counts.family] = absolute_error(counts.components, n['o'], n['s'], n['r'])
        n_obs = max(n_obs, n['o'])

        watched = n['o'] * n['s'] * segment_minutes
        if counts.human:
            human_minutes += counts.n_r * watched
        else:
            model_minutes = max(model_minutes, watched)

    denominator = universe + sum(errors.values())
    value = universe / denominator if denominator > 0.0 else 0.0
    return DStudyResult(label=scenario.label, n_obs=n_obs, phi_tilde=min(max(value, 0.0), 1.0),
                        universe_variance=universe, absolute_errors=errors, human_minutes=human_minutes,
                        model_observation_minutes=model_minutes)


def _segments(minutes: float) -> int:
    return int(round(minutes / settings.segment_minutes))


def human_only(human: VarianceComponents, n_observations: int, n_raters: int = 1,
               label: str = 'human') -> DStudyScenario:
    """Human raters each watching ``n_observations`` windows of the human observation length."""
    return DStudyScenario(label=label,
                          families=[FamilyCounts(family=settings.human_family, components=human, n_r=n_raters)],
                          shared_o=n_observations, shared_s=_segments(settings.hil_human_minutes))


def second_human(human: VarianceComponents, n_observations: int) -> DStudyScenario:
    return human_only(human, n_observations, n_raters=2, label='second-human')


def hil(human: VarianceComponents, model: VarianceComponents, n_observations: int, n_model_raters: int = 1,
        model_family: str = 'model', label: Optional[str] = None) -> DStudyScenario:
    """
    Human-in-the-loop: a human watches part of each class, the model family watches the whole class.
    Shared counts cover the human's window; the model's remaining segments are its own.
    """
    shared_s = _segments(settings.hil_human_minutes)
    model_only_s = _segments(settings.class_minutes) - shared_s
    families = [
        FamilyCounts(family=settings.human_family, components=human, human=True, n_o=0, n_s=0, n_r=1),
        FamilyCounts(family=model_family, components=model, human=False, n_o=0, n_s=model_only_s,
                     n_r=n_model_raters),
    ]
    return DStudyScenario(label=label or ('hil' if n_model_raters == 1 else 'ensemble'), families=families,
                          shared_o=n_observations, shared_s=shared_s)


def hil_scenario(human: VarianceComponents, model: VarianceComponents, n_observations: int) -> DStudyResult:
    if n_observations < 1:
        raise InfeasibleScenarioError("a human-in-the-loop scenario needs at least one observation")
    return phi_tilde(hil(human, model, n_observations))


def ensemble(human: VarianceComponents, model: VarianceComponents, n_observations: int,
             n_model_raters: int = 3) -> DStudyScenario:
    return hil(human, model, n_observations, n_model_raters=n_model_raters, label='ensemble')


def sweep(template: Callable[[int], DStudyScenario], values: Iterable[int]) -> List[DStudyResult]:
    return [phi_tilde(template(n)) for n in values]


def sweep_all(human: VarianceComponents, model: Optional[VarianceComponents], max_obs: int,
              scenarios: Optional[List[str]] = None) -> pd.DataFrame:
    """Plot-ready curves for every scenario over 1..max_obs observations."""
    builders: Dict[str, Callable[[int], DStudyScenario]] = {
        'human': lambda n: human_only(human, n),
        'second-human': lambda n: second_human(human, n),
    }
    if model is not None:
        builders['hil'] = lambda n: hil(human, model, n)
        builders['ensemble'] = lambda n: ensemble(human, model, n)

    rows = []
    for name in scenarios or list(builders):
        if name not in builders:
            raise InfeasibleScenarioError(f"scenario {name} needs model components")
        for result in sweep(builders[name], range(1, max_obs + 1)):
            rows.append({'scenario': name, 'n_obs': result.n_obs, 'phi_tilde': result.phi_tilde,
                         'human_minutes': result.human_minutes,
                         'model_minutes': result.model_observation_minutes})
    return pd.DataFrame(rows, columns=['scenario', 'n_obs', 'phi_tilde', 'human_minutes', 'model_minutes'])


class Crossover(BaseModel):
    model_config = ConfigDict(frozen=True)

    baseline_obs: int
    baseline_phi: float
    hil_obs: int
    hil_phi: float
    minutes_saved: float


def crossover(human: VarianceComponents, model: VarianceComponents, baseline_obs: int,
              n_model_raters: int = 1) -> Optional[Crossover]:
    """
    Fewest human-in-the-loop observations whose dependability matches human-only rating at ``baseline_obs``
    observations, with the human minutes saved. None when no count up to ``baseline_obs`` gets there.
    """
    baseline = phi_tilde(human_only(human, baseline_obs))
    for n in range(1, baseline_obs + 1):
        result = phi_tilde(hil(human, model, n, n_model_raters))
        if result.phi_tilde >= baseline.phi_tilde:
            saved = baseline.human_minutes - result.human_minutes
            logger.info("%d human-in-the-loop observations match %d human-only ones, saving %.0f minutes",
                        n, baseline_obs, saved)
            return Crossover(baseline_obs=baseline_obs, baseline_phi=baseline.phi_tilde, hil_obs=n,
                             hil_phi=result.phi_tilde, minutes_saved=saved)
    return None


def family_components(ds: Dataset, item: str, family: str) -> VarianceComponents:
    """Teacher-year level R x (S:O:I) components, the input every scenario expects."""
    return fit_variance_components(ds, VarianceDesign.RxSOI, family, item, teacher_level='teacher_year')
