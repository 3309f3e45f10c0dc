"""
Cross-lesson correlation between two rater families, corrected for each family's unreliability.

A family that tracks the teacher should rate the same teacher similarly on a different lesson than the
one the other family saw. Lesson-specific agreement (both families reacting to the same lesson, not to
the teacher) does not survive that split.
"""
import logging
from typing import Callable, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from .dataset import Dataset
from .errors import InestimableTermError, UsageError
from .gtheory import gstudy
from .labelqual_config import settings
from .models.results import DisattenuationResult, VarianceDesign
from .parallel import derive_rng

logger = logging.getLogger(__name__)

CI_METHOD = 'teacher-bootstrap-percentile'

Interval = Tuple[float, float]
ReliabilityFn = Callable[[np.ndarray], Tuple[Optional[float], Optional[float]]]


def _lesson_scores(frame: pd.DataFrame, level: str, rng: np.random.Generator) -> pd.DataFrame:
    """One score per (teacher, lesson, rater): the lesson mean, or a random segment for ``level='segment'``."""
    keys = ['teacher_id', 'observation_id', 'rater_id']
    if level == 'lesson':
        return frame.groupby(keys, sort=True)['score'].mean().reset_index()
    if level == 'segment':
        frame = frame.sort_values(keys + ['segment_index'], kind='mergesort').reset_index(drop=True)
        group = frame.groupby(keys, sort=False).ngroup().to_numpy()
        starts = np.flatnonzero(np.r_[True, group[1:] != group[:-1]])
        sizes = np.diff(np.r_[starts, len(frame)])
        chosen = starts + np.floor(rng.random(len(starts)) * sizes).astype(np.int64)
        return frame.iloc[chosen][keys + ['score']].reset_index(drop=True)
    raise ValueError(f"unknown aggregation level {level}")


def cross_lesson_pairs(ds: Dataset, item: str, family_a: str, family_b: str, seed: int,
                       level: str = 'lesson') -> pd.DataFrame:
    """
    For every teacher with two distinct lessons, one rated by each family, draws a lesson pair (a, b) with
    a != b and a random rater of each family on its lesson.

    :return: one row per eligible teacher with columns teacher_id, lesson_a, lesson_b, score_a, score_b
    """
    rng = derive_rng(seed, 'cross-lesson', item, family_a, family_b)
    frame = ds.records.loc[ds.records['item_id'] == item]
    scores = {f: _lesson_scores(frame.loc[frame['family'] == f], level, rng) for f in (family_a, family_b)}

    by_teacher = {f: dict(tuple(s.groupby('teacher_id', sort=True))) for f, s in scores.items()}
    rows = []
    excluded = 0
    for teacher in sorted(set(by_teacher[family_a]) & set(by_teacher[family_b])):
        a, b = by_teacher[family_a][teacher], by_teacher[family_b][teacher]
        lessons_a, lessons_b = sorted(a['observation_id'].unique()), sorted(b['observation_id'].unique())
        options = [(la, lb) for la in lessons_a for lb in lessons_b if la != lb]
        if not options:
            excluded += 1
            continue

        la, lb = options[int(rng.integers(len(options)))]
        on_a = a.loc[a['observation_id'] == la]
        on_b = b.loc[b['observation_id'] == lb]
        score_a = float(on_a['score'].iloc[int(rng.integers(len(on_a)))])
        score_b = float(on_b['score'].iloc[int(rng.integers(len(on_b)))])
        rows.append((teacher, la, lb, score_a, score_b))

    excluded += len(set(by_teacher[family_a]) ^ set(by_teacher[family_b]))
    if excluded:
        logger.info("%d teachers lack distinct lessons for %s and %s on item %s", excluded, family_a, family_b, item)

    return pd.DataFrame(rows, columns=['teacher_id', 'lesson_a', 'lesson_b', 'score_a', 'score_b'])


def _correlation(a: np.ndarray, b: np.ndarray) -> Optional[float]:
    if len(a) < 3 or np.ptp(a) == 0 or np.ptp(b) == 0:
        return None
    return float(stats.pearsonr(a, b)[0])


def fisher_ci(r: float, n: int, alpha: Optional[float] = None) -> Optional[Interval]:
    alpha = settings.alpha if alpha is None else alpha
    if n <= 3:
        return None
    if abs(r) >= 1.0:
        return r, r

    half = stats.norm.ppf(1 - alpha / 2) / np.sqrt(n - 3)
    z = np.arctanh(r)
    return float(np.tanh(z - half)), float(np.tanh(z + half))


def disattenuate(raw_corr: float, erho2_a: Optional[float], erho2_b: Optional[float]) -> Optional[float]:
    """Raw correlation divided by the geometric mean of the two reliabilities; None when either is 0 or missing."""
    if erho2_a is None or erho2_b is None or erho2_a <= 0.0 or erho2_b <= 0.0:
        return None
    return raw_corr / float(np.sqrt(erho2_a * erho2_b))


def disattenuated_ci(pairs: pd.DataFrame, erho2_a: float, erho2_b: float, B: Optional[int] = None,
                     alpha: Optional[float] = None, seed: int = 0,
                     reliabilities: Optional[ReliabilityFn] = None) -> Tuple[Optional[Interval], int]:
    """
    Percentile interval for the disattenuated correlation from a teacher-level bootstrap. Reliabilities stay
    fixed unless ``reliabilities`` is given, in which case it is called with every resample's teacher ids.

    :return: (interval, or None when fewer than three pairs or every resample is degenerate; number of degenerate
        resamples skipped)
    """
    B = settings.bootstrap_replicates if B is None else B
    alpha = settings.alpha if alpha is None else alpha
    if B < 500:
        raise UsageError("the disattenuation bootstrap needs at least 500 replicates")

    a = pairs['score_a'].to_numpy(float)
    b = pairs['score_b'].to_numpy(float)
    teachers = pairs['teacher_id'].to_numpy()
    n = len(a)
    if n < 3:
        return None, B

    values: List[float] = []
    degenerate = 0
    for replicate in range(B):
        rows = derive_rng(seed, 'disattenuation', replicate).integers(0, n, n)
        r = _correlation(a[rows], b[rows])
        rel_a, rel_b = reliabilities(teachers[rows]) if reliabilities else (erho2_a, erho2_b)
        value = disattenuate(r, rel_a, rel_b) if r is not None else None
        if value is None:
            degenerate += 1
        else:
            values.append(value)

    if degenerate:
        logger.warning("%d of %d disattenuation resamples were degenerate and skipped", degenerate, B)

    if not values:
        return None, degenerate

    low, high = np.quantile(values, [alpha / 2, 1 - alpha / 2])
    return (float(low), float(high)), degenerate


def family_reliability(ds: Dataset, item: str, family: str, design: VarianceDesign) -> Optional[float]:
    """
    E-rho2 of one family on one item. Facets the layout cannot separate are folded (a single segment turns
    RxSOI into RxOI, a single rater leaves ``r`` and ``ir`` out); None when the teacher term itself is inestimable.
    """
    try:
        return gstudy(ds, design, family, item, fold=True).erho2
    except InestimableTermError as e:
        logger.warning("E-rho2 for %s on item %s is inestimable: %s", family, item, e.message)
        return None


def analyze_item(ds: Dataset, item: str, family_a: str, family_b: str, seed: int = 0, B: Optional[int] = None,
                 alpha: Optional[float] = None, design: VarianceDesign = VarianceDesign.RxSOI,
                 erho2_a: Optional[float] = None, erho2_b: Optional[float] = None,
                 concordance_corr: Optional[float] = None, level: str = 'lesson',
                 resample_reliabilities: bool = False) -> DisattenuationResult:
    alpha = settings.alpha if alpha is None else alpha
    if erho2_a is None:
        erho2_a = family_reliability(ds, item, family_a, design)
    if erho2_b is None:
        erho2_b = family_reliability(ds, item, family_b, design)

    pairs = cross_lesson_pairs(ds, item, family_a, family_b, seed, level)
    n = len(pairs)
    low_n = n < settings.low_n_teachers
    if low_n:
        logger.warning("only %d teachers contribute cross-lesson pairs for item %s", n, item)

    raw = _correlation(pairs['score_a'].to_numpy(float), pairs['score_b'].to_numpy(float))
    raw_ci = fisher_ci(raw, n, alpha) if raw is not None else None
    value = disattenuate(raw, erho2_a, erho2_b) if raw is not None else None

    ci, n_degenerate = None, 0
    reason = None
    if value is not None:
        callback = None
        if resample_reliabilities:
            def callback(teachers: np.ndarray) -> Tuple[Optional[float], Optional[float]]:
                subset = ds.subset(teachers=np.unique(teachers))
                return (family_reliability(subset, item, family_a, design),
                        family_reliability(subset, item, family_b, design))
        ci, n_degenerate = disattenuated_ci(pairs, erho2_a, erho2_b, B, alpha, seed, callback)
        if ci is None:
            reason = "every bootstrap resample was degenerate"
    elif erho2_a is None or erho2_b is None:
        reason = "the teacher variance of a family is inestimable"
    elif raw is None:
        reason = "fewer than three cross-lesson pairs or a constant score"
    else:
        reason = "a family has zero generalizability"

    incalculable = value is None
    spans_zero = ci is None or ci[0] <= 0.0 <= ci[1]
    spurious = (concordance_corr is not None and concordance_corr > settings.spurious_threshold
                and (incalculable or spans_zero))

    return DisattenuationResult(item=item, family_a=family_a, family_b=family_b, raw_corr=raw, raw_ci=raw_ci,
                                disattenuated=value, disattenuated_ci=ci, erho2_a=erho2_a, erho2_b=erho2_b,
                                n_teacher_pairs=n, n_degenerate=n_degenerate, low_n=low_n,
                                inestimable=erho2_a is None or erho2_b is None,
                                incalculable=incalculable, spurious_flag=spurious,
                                overunity_flag=value is not None and abs(value) > 1.0,
                                ci_method=CI_METHOD + ('-resampled-reliabilities' if resample_reliabilities else ''),
                                reason=reason)


def result_row(result: DisattenuationResult) -> dict:
    raw_lo, raw_hi = result.raw_ci or (None, None)
    dis_lo, dis_hi = result.disattenuated_ci or (None, None)
    return {'item': result.item, 'family_a': result.family_a, 'family_b': result.family_b,
            'raw': result.raw_corr, 'raw_lo': raw_lo, 'raw_hi': raw_hi, 'disatten': result.disattenuated,
            'dis_lo': dis_lo, 'dis_hi': dis_hi, 'erho2_a': result.erho2_a, 'erho2_b': result.erho2_b,
            'n': result.n_teacher_pairs, 'flags': ';'.join(result.flags), 'note': result.reason or ''}


def gap_row(item: str, family_a: str, family_b: str, note: str) -> dict:
    """Row for a (item, family) pair that could not be analyzed at all."""
    return {'item': item, 'family_a': family_a, 'family_b': family_b, 'raw': None, 'raw_lo': None, 'raw_hi': None,
            'disatten': None, 'dis_lo': None, 'dis_hi': None, 'erho2_a': None, 'erho2_b': None, 'n': 0,
            'flags': 'missing', 'note': note}
