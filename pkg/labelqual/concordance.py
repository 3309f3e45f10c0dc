"""
Agreement and correlation between a reference human and a target rater family, with
reference-reassignment bootstrap intervals and the two-stage teacher ICC.
"""
import logging
from functools import partial
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from .dataset import Dataset, paired_frame, sample_reference_raters
from .errors import InestimableTermError, UsageError
from .gtheory import check_estimable, fit_reml
from .labelqual_config import settings
from .models.results import AGREEMENT_METRICS, CORRELATION_METRICS, MetricName, MetricResult
from .parallel import derive_seed, map_units

logger = logging.getLogger(__name__)

ADJUSTED_LESSONS = 6

Panel = Dict[MetricName, MetricResult]


def _clip(value: float, metric: MetricName) -> float:
    low, high = metric.bounds
    return float(min(max(value, low), high))


def confusion_matrix(a: np.ndarray, b: np.ndarray, categories: int) -> np.ndarray:
    observed = np.zeros((categories, categories), dtype=np.int64)
    np.add.at(observed, (a - 1, b - 1), 1)
    return observed


def agreement_metrics(pairs: Sequence[Tuple[int, int]], categories: int) -> Panel:
    """
    Exact and adjacent agreement, Cohen's kappa and quadratic weighted kappa for paired scores on 1..K.

    :param pairs: (reference score, target score) tuples
    :param categories: K
    :return: metric -> MetricResult
    """
    n = len(pairs)
    if n == 0:
        return {m: MetricResult.undefined(m, "no pairs") for m in AGREEMENT_METRICS}

    a, b = (np.asarray(x, dtype=np.int64) for x in zip(*pairs))
    if a.min() < 1 or b.min() < 1 or a.max() > categories or b.max() > categories:
        raise ValueError(f"scores must lie in 1..{categories}")

    results = {
        MetricName.PCT_AGREE: MetricResult(metric=MetricName.PCT_AGREE, estimate=float(np.mean(a == b)), n_pairs=n),
        MetricName.PCT_AGREE_WITHIN1: MetricResult(metric=MetricName.PCT_AGREE_WITHIN1,
                                                   estimate=float(np.mean(np.abs(a - b) <= 1)), n_pairs=n),
    }

    observed = confusion_matrix(a, b, categories) / n
    expected = np.outer(observed.sum(axis=1), observed.sum(axis=0))

    p_o = float(np.trace(observed))
    p_e = float(np.trace(expected))
    if p_e >= 1.0 - 1e-12:
        results[MetricName.COHEN_KAPPA] = MetricResult.undefined(MetricName.COHEN_KAPPA,
                                                                 "degenerate marginals", n_pairs=n)
    else:
        results[MetricName.COHEN_KAPPA] = MetricResult(
            metric=MetricName.COHEN_KAPPA, estimate=_clip((p_o - p_e) / (1.0 - p_e), MetricName.COHEN_KAPPA),
            n_pairs=n)

    k = np.arange(categories)
    weights = (k[:, None] - k[None, :]) ** 2 / float(categories - 1) ** 2
    weighted_expected = float(np.sum(weights * expected))
    if weighted_expected <= 1e-12:
        results[MetricName.QWK] = MetricResult.undefined(MetricName.QWK, "degenerate marginals", n_pairs=n)
    else:
        qwk = 1.0 - float(np.sum(weights * observed)) / weighted_expected
        results[MetricName.QWK] = MetricResult(metric=MetricName.QWK, estimate=_clip(qwk, MetricName.QWK), n_pairs=n)

    return results


def rank_correlations(pairs: Sequence[Tuple[float, float]]) -> Panel:
    n = len(pairs)
    if n < 3:
        return {m: MetricResult.undefined(m, "fewer than 3 pairs", n_pairs=n) for m in CORRELATION_METRICS}

    a, b = (np.asarray(x, dtype=float) for x in zip(*pairs))
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        return {m: MetricResult.undefined(m, "zero variance", n_pairs=n) for m in CORRELATION_METRICS}

    estimates = {
        MetricName.PEARSON_R: stats.pearsonr(a, b)[0],
        MetricName.SPEARMAN_RHO: stats.spearmanr(a, b)[0],
        MetricName.KENDALL_TAU: stats.kendalltau(a, b, variant='b')[0],
    }
    return {m: MetricResult(metric=m, estimate=_clip(float(v), m), n_pairs=n) for m, v in estimates.items()}


def icc_from_components(teacher_variance: float, residual_variance: float, n_lessons: int = 1) -> float:
    denominator = teacher_variance + residual_variance / n_lessons
    if denominator <= 0.0:
        return 0.0
    return teacher_variance / denominator


def icc(scores: Sequence[Tuple[str, float]], n_lessons: int = 1) -> MetricResult:
    """
    Teacher intraclass correlation of lesson-level values from a random-intercept REML fit.
    With ``n_lessons`` > 1 the residual is averaged over that many lessons (adjusted ICC).
    """
    metric = MetricName.ICC if n_lessons == 1 else MetricName.ADJ_ICC
    if n_lessons < 1:
        raise ValueError("n_lessons must be positive")

    frame = pd.DataFrame(list(scores), columns=['teacher', 'value'])
    n = len(frame)
    if frame['teacher'].nunique() < 2:
        return MetricResult.undefined(metric, "fewer than two teachers", n_pairs=n)

    codes = frame.groupby('teacher', sort=True).ngroup().to_numpy()
    try:
        check_estimable({'teacher': codes}, n)
    except InestimableTermError as e:
        return MetricResult.undefined(metric, e.message, n_pairs=n)

    fit = fit_reml(frame['value'].to_numpy(float), {'teacher': codes})
    teacher_variance = fit.components['teacher']
    value = icc_from_components(teacher_variance, fit.components['residual'], n_lessons)
    return MetricResult(metric=metric, estimate=_clip(value, metric), n_pairs=n, degenerate=teacher_variance == 0.0)


def family_concordance(ds: Dataset, family: str, item: Optional[str] = None, seed: int = 0,
                       reference: Optional[Dict] = None, target_rater: Optional[str] = None,
                       resample_cells: bool = False) -> Panel:
    """
    All nine metrics for one reference assignment. ICCs use lesson means of the paired target scores.

    With ``resample_cells`` the paired cells are also drawn with replacement, which adds sampling
    uncertainty on top of the reference-assignment uncertainty.
    """
    if reference is None:
        reference = sample_reference_raters(ds, seed)
    frame = paired_frame(ds, reference, family, item, seed, target_rater)
    if resample_cells and len(frame):
        rows = np.random.default_rng(derive_seed(seed, 'cells')).integers(0, len(frame), len(frame))
        frame = frame.iloc[rows].reset_index(drop=True)

    pairs = list(zip(frame['ref_score'].astype(int), frame['target_score'].astype(int)))
    if item is not None:
        categories = ds.categories(item)
    else:
        categories = max((ds.categories(j) for j in frame['item_id'].unique()), default=2)

    panel = agreement_metrics(pairs, categories)
    panel.update(rank_correlations(pairs))

    lessons = frame.groupby(['teacher_id', 'observation_id'], sort=True)['target_score'].mean().reset_index()
    lesson_scores = list(zip(lessons['teacher_id'], lessons['target_score']))
    panel[MetricName.ICC] = icc(lesson_scores, 1)
    panel[MetricName.ADJ_ICC] = icc(lesson_scores, ADJUSTED_LESSONS)
    return panel


def _replicate(ds: Dataset, family: str, item: Optional[str], seed: int, resample_cells: bool,
               replicate: int) -> Dict[MetricName, Optional[float]]:
    replicate_seed = derive_seed(seed, 'replicate', replicate)
    panel = family_concordance(ds, family, item, replicate_seed, resample_cells=resample_cells)
    logger.debug("replicate %d for %s/%s done", replicate, family, item)
    return {m: r.estimate for m, r in panel.items()}


def bootstrap_panel(ds: Dataset, family: str, item: Optional[str] = None, replicates: Optional[int] = None,
                    seed: int = 0, alpha: Optional[float] = None, threads: int = 1,
                    resample_cells: bool = False, metrics: Optional[Iterable[MetricName]] = None) -> Panel:
    """
    Reference-reassignment bootstrap of the metric panel: every replicate redraws the reference human per cell
    and recomputes the metrics. Estimates are replicate means and intervals empirical percentiles.
    """
    replicates = settings.bootstrap_replicates if replicates is None else replicates
    alpha = settings.alpha if alpha is None else alpha
    if replicates < 100:
        raise UsageError("the bootstrap needs at least 100 replicates")
    metrics = list(metrics) if metrics is not None else list(MetricName)

    point = family_concordance(ds, family, item, seed)
    draws = map_units(partial(_replicate, ds, family, item, seed, resample_cells), range(replicates), threads)

    panel = dict()
    for metric in metrics:
        values = np.array([d[metric] for d in draws if d[metric] is not None], dtype=float)
        failures = replicates - len(values)
        n_pairs = point[metric].n_pairs
        if failures * 2 > replicates:
            reason = point[metric].reason or "undefined in most replicates"
            panel[metric] = MetricResult.undefined(metric, reason, n_pairs=n_pairs, failures=failures)
            continue

        if failures:
            logger.warning("%s for %s/%s undefined in %d of %d replicates", metric.value, family,
                           item or 'all items', failures, replicates)
        low, high = np.quantile(values, [alpha / 2, 1 - alpha / 2])
        panel[metric] = MetricResult(metric=metric, estimate=_clip(float(values.mean()), metric),
                                     ci_low=_clip(float(low), metric), ci_high=_clip(float(high), metric),
                                     n_pairs=n_pairs, failures=failures, degenerate=bool(np.ptp(values) == 0))
    return panel


def bootstrap_ci(ds: Dataset, metric: MetricName, family: str, B: Optional[int] = None, seed: int = 0,
                 alpha: Optional[float] = None, item: Optional[str] = None, threads: int = 1) -> MetricResult:
    return bootstrap_panel(ds, family, item, B, seed, alpha, threads, metrics=[metric])[metric]


def panel_rows(panel: Panel, item: Optional[str], family: str) -> List[Dict[str, object]]:
    rows = []
    for metric, result in sorted(panel.items(), key=lambda kv: kv[0].value):
        rows.append({'item': item or 'all', 'family': family, 'metric': metric.value, 'estimate': result.estimate,
                     'ci_low': result.ci_low, 'ci_high': result.ci_high, 'n': result.n_pairs,
                     'reason': result.reason or ''})
    return rows
