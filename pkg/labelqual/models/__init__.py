from .dataset import ScaleSpec, RatingRecord, TeacherAttributes, RATINGS_COLUMNS, ROSTER_COLUMNS, ATTRIBUTES_COLUMNS
from .results import (MetricName, MetricResult, VarianceDesign, VarianceComponents, GStudyResult,
                      DisattenuationResult, DStudyResult)
from .hrm import HrmConfig, HrmPriors, RaterBiasSummary, FairnessContrast, SeverityClass
from .synth import SynthSpec, SynthMode, FamilySpec, GStudyPlant, HrmPlant, Assignment
