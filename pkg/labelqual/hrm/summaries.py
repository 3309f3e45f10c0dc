import logging
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..errors import UsageError
from ..labelqual_config import settings
from ..models.hrm import FairnessContrast, RaterBiasSummary, SeverityClass
from .draws import PosteriorDraws

logger = logging.getLogger(__name__)

POOLED_ITEM = 'all'


def _interval(values: np.ndarray, alpha: float):
    low, high = np.quantile(values, [alpha / 2, 1 - alpha / 2])
    return float(low), float(high)


def summarize_bias(draws: PosteriorDraws, alpha: Optional[float] = None,
                   centered: bool = True) -> List[RaterBiasSummary]:
    """
    Posterior summaries of rater bias and variability per (rater, item, level).

    Bias is centred on the item mean eta drawwise. A rater is lenient or severe on an item when its mean
    bias is at least ``settings.severity_sd`` across-rater standard deviations from zero.
    """
    alpha = settings.alpha if alpha is None else alpha
    phi = draws.stacked('phi')
    if centered:
        phi = phi - draws.stacked('eta')[:, None, :, :]
    psi = np.sqrt(np.exp(draws.stacked('log_psi2')))

    raters, items, levels = draws.coords['rater'], draws.coords['item'], draws.coords['level']
    identified = ~np.isnan(phi).any(axis=0)
    means = phi.mean(axis=0)

    thresholds = dict()
    for j, item in enumerate(items):
        spread = means[:, j, :][identified[:, j, :]]
        sd = float(np.std(spread, ddof=1)) if len(spread) > 1 else 0.0
        thresholds[item] = settings.severity_sd * sd
    logger.info("severity thresholds per item (%.2f across-rater sd): %s", settings.severity_sd, thresholds)

    summaries = []
    for r, rater in enumerate(raters):
        for j, item in enumerate(items):
            for g, level in enumerate(levels):
                if not identified[r, j, g]:
                    summaries.append(RaterBiasSummary(rater_id=rater, item_id=item, level=level,
                                                      reason="no ratings for this rater, item and level"))
                    continue

                mean = float(means[r, j, g])
                threshold = thresholds[item]
                if threshold > 0.0 and abs(mean) >= threshold:
                    severity = SeverityClass.LENIENT if mean > 0 else SeverityClass.SEVERE
                else:
                    severity = SeverityClass.NEUTRAL
                summaries.append(RaterBiasSummary(rater_id=rater, item_id=item, level=level, phi_mean=mean,
                                                  phi_ci=_interval(phi[:, r, j, g], alpha),
                                                  psi_mean=float(psi[:, r, j, g].mean()), severity=severity))
    return summaries


def fairness_contrast(draws: PosteriorDraws, focal: Optional[Sequence[str]] = None,
                      reference: Optional[str] = None, alpha: Optional[float] = None,
                      pooled: bool = False) -> List[FairnessContrast]:
    """
    Drawwise difference phi[focal] - phi[reference] per (rater, item); violation when the interval excludes 0.

    With ``pooled`` the difference is averaged over the rater's identified items first and reported once per
    rater under item ``all``.
    """
    alpha = settings.alpha if alpha is None else alpha
    levels = draws.coords['level']
    if len(levels) < 2:
        raise UsageError("fairness contrasts need a covariate with at least two levels")

    reference = reference or levels[0]
    focal = list(focal) if focal else [lv for lv in levels if lv != reference]
    for level in list(focal) + [reference]:
        if level not in levels:
            raise UsageError(f"unknown attribute level {level!r}; known: {levels}")

    phi = draws.stacked('phi')
    ref = levels.index(reference)
    items = draws.coords['item']
    groups = [(POOLED_ITEM, list(range(len(items))))] if pooled else [(item, [j]) for j, item in enumerate(items)]
    contrasts = []
    for r, rater in enumerate(draws.coords['rater']):
        for label, columns in groups:
            for level in focal:
                delta = phi[:, r, columns, levels.index(level)] - phi[:, r, columns, ref]
                known = ~np.isnan(delta).any(axis=0)
                if not known.any():
                    contrasts.append(FairnessContrast(rater_id=rater, item_id=label, focal=level, reference=reference,
                                                      reason="bias unidentified for one of the levels"))
                    continue

                delta = delta[:, known].mean(axis=1)
                low, high = _interval(delta, alpha)
                contrasts.append(FairnessContrast(rater_id=rater, item_id=label, focal=level, reference=reference,
                                                  delta_mean=float(delta.mean()), delta_ci=(low, high),
                                                  independence_violation=low > 0.0 or high < 0.0))
    return contrasts


def summary_rows(bias: List[RaterBiasSummary], contrasts: Optional[List[FairnessContrast]] = None) -> List[Dict]:
    by_key = {(c.rater_id, c.item_id, c.focal): c for c in contrasts or []}
    rows = []
    for b in bias:
        c = by_key.get((b.rater_id, b.item_id, b.level))
        flags = []
        if not b.identified:
            flags.append('unidentified')
        elif b.severity != SeverityClass.NEUTRAL:
            flags.append(b.severity.value)
        if c is not None and c.independence_violation:
            flags.append('independence_violation')

        phi_lo, phi_hi = b.phi_ci or (None, None)
        delta_lo, delta_hi = (c.delta_ci if c is not None and c.delta_ci else (None, None))
        rows.append({'rater': b.rater_id, 'item': b.item_id, 'level': b.level, 'phi': b.phi_mean,
                     'phi_lo': phi_lo, 'phi_hi': phi_hi, 'psi': b.psi_mean,
                     'delta': c.delta_mean if c is not None else None, 'delta_lo': delta_lo, 'delta_hi': delta_hi,
                     'flags': ';'.join(flags)})
    return rows
