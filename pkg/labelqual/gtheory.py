"""
Variance components for nested multifacet rating designs.

``fit_reml`` is an EM-REML solver built on Henderson's mixed-model equations with an intercept-only
fixed part. Every design in ``VarianceDesign`` maps onto it by turning each random term into a vector
of integer level codes.
"""
import logging
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
import scipy.linalg
import scipy.sparse
import statsmodels.api as sm

from .dataset import Dataset
from .errors import DatasetError, InestimableTermError, UsageError
from .labelqual_config import settings
from .models.results import RESIDUAL, TERM_FACETS, GStudyResult, VarianceComponents, VarianceDesign

logger = logging.getLogger(__name__)

TRUNCATION = 1e-8
FOLDABLE_TERMS = ('o:i', 's:o:i', 'r', 'ir')


class RemlFit(object):
    components: Dict[str, float]
    grand_mean: float
    n_obs: int
    converged: bool
    iterations: int
    log_likelihood: Optional[float]
    truncated: List[str]

    def __init__(self, components: Dict[str, float], grand_mean: float, n_obs: int, converged: bool,
                 iterations: int, log_likelihood: Optional[float], truncated: List[str]):
        self.components = components
        self.grand_mean = grand_mean
        self.n_obs = n_obs
        self.converged = converged
        self.iterations = iterations
        self.log_likelihood = log_likelihood
        self.truncated = truncated


def _design_matrix(groups: Dict[str, np.ndarray], n: int) -> Tuple[scipy.sparse.csc_matrix, Dict[str, slice]]:
    blocks = [scipy.sparse.csc_matrix(np.ones((n, 1)))]
    slices = dict()
    offset = 1
    rows = np.arange(n)
    for term, codes in groups.items():
        q = int(codes.max()) + 1
        blocks.append(scipy.sparse.csc_matrix((np.ones(n), (rows, codes)), shape=(n, q)))
        slices[term] = slice(offset, offset + q)
        offset += q
    return scipy.sparse.hstack(blocks, format='csc'), slices


def fit_reml(y: np.ndarray, groups: Dict[str, np.ndarray], tolerance: Optional[float] = None,
             max_iterations: Optional[int] = None) -> RemlFit:
    """
    EM-REML for y = mu + sum_k Z_k u_k + e with independent u_k ~ N(0, s2_k I) and e ~ N(0, s2_e I).

    :param y: response vector
    :param groups: term name -> integer level code per observation (codes 0..q_k-1)
    :param tolerance: stop once every component's relative change is below it
    :param max_iterations: iteration cap; hitting it leaves ``converged`` False
    :return: RemlFit with one component per term plus ``residual``
    """
    tolerance = settings.em_tolerance if tolerance is None else tolerance
    max_iterations = settings.em_max_iterations if max_iterations is None else max_iterations

    y = np.asarray(y, dtype=float)
    n = len(y)
    p = 1
    groups = {t: np.unique(np.asarray(c), return_inverse=True)[1] for t, c in groups.items()}
    terms = list(groups)
    total = float(np.var(y, ddof=1)) if n > 1 else 0.0
    grand_mean = float(y.mean()) if n else 0.0

    if total <= 0.0:
        components = {t: 0.0 for t in terms}
        components[RESIDUAL] = 0.0
        return RemlFit(components, grand_mean, n, True, 0, None, [])

    W, slices = _design_matrix(groups, n)
    WtW = (W.T @ W).toarray()
    Wty = W.T @ y
    yty = float(y @ y)

    sigma = {t: total / (len(terms) + 1) for t in terms}
    sigma_e = total / (len(terms) + 1)
    floor = TRUNCATION * total
    truncated: List[str] = []

    converged = False
    iteration = 0
    theta = np.zeros(W.shape[1])
    log_det = 0.0
    active: List[str] = list(terms)
    while iteration < max_iterations:
        iteration += 1
        active = [t for t in terms if t not in truncated]
        idx = np.concatenate([[0]] + [np.arange(slices[t].start, slices[t].stop) for t in active]).astype(int)
        C = WtW[np.ix_(idx, idx)].copy()
        pos = 1
        local = dict()
        for t in active:
            q = slices[t].stop - slices[t].start
            local[t] = slice(pos, pos + q)
            C[pos:pos + q, pos:pos + q] += np.eye(q) * (sigma_e / sigma[t])
            pos += q

        factor = scipy.linalg.cho_factor(C, lower=True)
        rhs = Wty[idx]
        sol = scipy.linalg.cho_solve(factor, rhs)
        inv, info = scipy.linalg.lapack.dpotri(factor[0], lower=1)
        if info != 0:
            raise np.linalg.LinAlgError(f"mixed-model equations are singular (info={info})")
        inv_diag = np.diag(inv)
        log_det = 2.0 * float(np.sum(np.log(np.diag(factor[0]))))

        new_sigma = dict(sigma)
        for t in active:
            u = sol[local[t]]
            q = len(u)
            new_sigma[t] = (float(u @ u) + sigma_e * float(inv_diag[local[t]].sum())) / q
        new_sigma_e = max((yty - float(sol @ rhs)) / (n - p), floor)

        for t in active:
            if new_sigma[t] < floor:
                new_sigma[t] = 0.0
                truncated.append(t)
                logger.debug("component %s fell below %.3g and was truncated at iteration %d", t, floor, iteration)

        old = np.array([sigma[t] for t in terms] + [sigma_e])
        new = np.array([new_sigma[t] for t in terms] + [new_sigma_e])
        change = np.abs(new - old) / np.maximum(np.abs(old), floor)
        sigma, sigma_e = new_sigma, new_sigma_e
        theta = np.zeros(W.shape[1])
        theta[idx] = sol

        if iteration % 50 == 0:
            logger.debug("EM-REML iteration %d: max relative change %.3g", iteration, float(change.max()))
        if float(change.max()) < tolerance:
            converged = True
            break

    if not converged:
        logger.warning("EM-REML did not converge within %d iterations", max_iterations)

    active = [t for t in terms if t not in truncated]
    if len(active) and all(sigma[t] > 0 for t in active):
        yPy = (yty - float(theta @ Wty)) / sigma_e
        log_g = sum((slices[t].stop - slices[t].start) * np.log(sigma[t] / sigma_e) for t in active)
        neg2 = (n - p) * np.log(sigma_e) + log_g + log_det + yPy + (n - p) * np.log(2 * np.pi)
        log_likelihood = float(-0.5 * neg2)
    else:
        log_likelihood = None

    components = {t: float(sigma[t]) for t in terms}
    components[RESIDUAL] = float(sigma_e)
    return RemlFit(components, float(theta[0]), n, converged, iteration, log_likelihood, sorted(set(truncated)))


def check_estimable(groups: Dict[str, np.ndarray], n: int) -> None:
    """Raises InestimableTermError for a term with one level, one level per observation, or a duplicate partition."""
    levels = {t: len(np.unique(c)) for t, c in groups.items()}
    for term, q in levels.items():
        if q < 2:
            raise InestimableTermError(term, "fewer than two levels in the data")
        if q >= n:
            raise InestimableTermError(term, "every rating has its own level, confounded with the residual")

    terms = list(groups)
    for a_pos, a in enumerate(terms):
        for b in terms[a_pos + 1:]:
            if levels[a] != levels[b]:
                continue
            joint = len(pd.MultiIndex.from_arrays([groups[a], groups[b]]).unique())
            if joint == levels[a]:
                raise InestimableTermError(b, f"its levels coincide with term '{a}'")


def term_codes(frame: pd.DataFrame, design: VarianceDesign) -> Dict[str, np.ndarray]:
    return {t: frame.groupby(list(TERM_FACETS[t]), sort=True).ngroup().to_numpy() for t in design.terms}


def fold_inestimable(groups: Dict[str, np.ndarray], n: int, label: str = '') -> List[str]:
    """
    Drops inestimable terms from ``groups`` in place until the rest can be estimated. A dropped term's variance
    lands in whatever term it is confounded with (``s:o:i`` in the residual for a single segment or rater,
    ``ir`` in ``i`` for a single rater). The teacher term ``i`` is never dropped.

    :return: the dropped terms, in the order they were dropped
    """
    folded: List[str] = []
    while True:
        try:
            check_estimable(groups, n)
            return folded
        except InestimableTermError as e:
            if e.term not in FOLDABLE_TERMS:
                raise
            logger.warning("folded term %s for %s: %s", e.term, label or 'this fit', e.message)
            folded.append(e.term)
            del groups[e.term]


def fit_variance_components(ds: Dataset, design: VarianceDesign, family: str, item: Optional[str] = None,
                            teacher_level: str = 'teacher', fold: bool = False) -> VarianceComponents:
    """
    REML variance components for one family (and item, for per-item designs).

    :param fold: drop inestimable terms other than ``i`` and report them as 0 under ``folded`` instead of raising
    """
    if design.by_item and item is None:
        raise UsageError(f"design {design.value} is fitted per item; pass an item")

    frame = ds.with_teacher_key(teacher_level)
    frame = frame.loc[frame['family'] == family]
    if design.by_item:
        frame = frame.loc[frame['item_id'] == item]
    if frame.empty:
        raise DatasetError(f"no ratings for family {family!r}" + (f" on item {item!r}" if item else ""))

    groups = term_codes(frame, design)
    if fold:
        folded = fold_inestimable(groups, len(frame), f"{family}/{item or 'all items'}")
    else:
        folded = []
        check_estimable(groups, len(frame))

    logger.info("fitting %s for family %s%s on %d ratings", design.value, family,
                f", item {item}" if item else "", len(frame))
    fit = fit_reml(frame['score'].to_numpy(dtype=float), groups)
    if fit.truncated:
        logger.warning("components truncated at 0 for %s/%s: %s", family, item or 'all items', fit.truncated)

    components = dict(fit.components)
    components.update({t: 0.0 for t in folded})
    return VarianceComponents(components=components, grand_mean=fit.grand_mean, n_obs=fit.n_obs,
                              converged=fit.converged, iterations=fit.iterations,
                              log_likelihood=fit.log_likelihood, truncated=fit.truncated, folded=folded,
                              design=design)


def _ratio(numerator: float, error_terms: Tuple[str, ...], vc: VarianceComponents) -> Tuple[float, bool]:
    denominator = numerator + sum(vc[t] for t in error_terms)
    if denominator <= 0.0:
        return 0.0, True
    return min(max(numerator / denominator, 0.0), 1.0), False


def generalizability(vc: VarianceComponents, design: VarianceDesign) -> float:
    return _ratio(vc['i'], design.relative_error_terms(), vc)[0]


def dependability(vc: VarianceComponents, design: VarianceDesign) -> float:
    return _ratio(vc['i'], design.absolute_error_terms(), vc)[0]


def gstudy(ds: Dataset, design: VarianceDesign, family: str, item: Optional[str] = None,
           teacher_level: str = 'teacher', fold: bool = False) -> GStudyResult:
    vc = fit_variance_components(ds, design, family, item, teacher_level, fold)
    erho2, degenerate = _ratio(vc['i'], design.relative_error_terms(), vc)
    phi, _ = _ratio(vc['i'], design.absolute_error_terms(), vc)
    if degenerate:
        logger.warning("zero total variance for %s/%s; reliabilities reported as 0", family, item or 'all items')
    return GStudyResult(item=item if design.by_item else None, family=family, design=design, components=vc,
                        erho2=erho2, phi=min(phi, erho2), degenerate=degenerate)


def _independent_columns(X: pd.DataFrame) -> List[str]:
    kept: List[str] = []
    rank = 1
    for column in X.columns:
        trial = np.column_stack([np.ones(len(X)), X[kept + [column]].to_numpy(float)])
        new_rank = int(np.linalg.matrix_rank(trial))
        if new_rank > rank:
            kept.append(column)
            rank = new_rank
        else:
            logger.warning("predictor %s is collinear with the others and was dropped", column)
    return kept


def item_score_reliability(ds: Dataset, item: str, family: Optional[str] = None) -> float:
    """Share of item ``item``'s teacher-level variance explained by the other items (OLS R^2)."""
    family = family or ds.human_family
    frame = ds.records.loc[ds.records['family'] == family]
    wide = frame.pivot_table(index='teacher_id', columns='item_id', values='score', aggfunc='mean').dropna()

    if item not in wide.columns:
        raise DatasetError(f"item {item!r} has no ratings for family {family!r}")
    if wide.shape[1] < 3:
        raise DatasetError("item-score reliability needs at least three items")

    y = wide[item].to_numpy(float)
    if np.var(y) == 0.0:
        logger.warning("item %s is constant across teachers; reliability reported as 0", item)
        return 0.0

    predictors = wide.drop(columns=[item])
    kept = _independent_columns(predictors)
    if not kept:
        return 0.0

    fit = sm.OLS(y, sm.add_constant(predictors[kept].to_numpy(float), has_constant='add')).fit()
    return float(min(max(1.0 - fit.ssr / fit.centered_tss, 0.0), 1.0))
