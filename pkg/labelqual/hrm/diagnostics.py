import logging
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .draws import PosteriorDraws

logger = logging.getLogger(__name__)

MIN_DRAWS = 50
RHAT_THRESHOLD = 1.1
MCSE_BATCHES = 20

# discrete or fixed by construction
SKIPPED = ('xi',)


def split_rhat(chains: np.ndarray) -> float:
    """
    Split-chain potential scale reduction factor for one scalar.

    :param chains: shape (chains, draws)
    :return: R-hat; 1.0 when every draw is identical
    """
    chains = np.asarray(chains, dtype=float)
    m, n = chains.shape
    if m < 2 or n < MIN_DRAWS:
        raise ValueError(f"R-hat needs at least 2 chains of {MIN_DRAWS} draws, got {m} x {n}")

    half = n // 2
    split = np.concatenate([chains[:, :half], chains[:, half:2 * half]], axis=0)
    within = float(np.mean(np.var(split, axis=1, ddof=1)))
    between = half * float(np.var(split.mean(axis=1), ddof=1))
    if within == 0.0:
        return 1.0 if between == 0.0 else float('inf')

    pooled = (half - 1) / half * within + between / half
    return float(np.sqrt(pooled / within))


def mcse(chains: np.ndarray, batches: int = MCSE_BATCHES) -> float:
    """
    Batch-means Monte Carlo standard error of the pooled posterior mean of one scalar.

    :param chains: shape (chains, draws); a 1-d array is one chain
    :param batches: contiguous batches per chain
    """
    chains = np.atleast_2d(np.asarray(chains, dtype=float))
    m, n = chains.shape
    size = n // batches
    if size < 2:
        raise ValueError(f"MCSE needs at least {2 * batches} draws per chain, got {n}")

    means = chains[:, :size * batches].reshape(m, batches, size).mean(axis=2)
    per_chain = np.var(means, axis=1, ddof=1) / batches
    return float(np.sqrt(per_chain.mean() / m))


def rhat(draws: PosteriorDraws, parameter: str, index: Optional[Sequence[int]] = None) -> float:
    """R-hat of one scalar (``index`` into the parameter's dims) or the largest over all its identified scalars."""
    values = draws[parameter]
    if index is not None:
        return split_rhat(values[(slice(None), slice(None)) + tuple(index)])

    flat = values.reshape(values.shape[:2] + (-1,))
    worst = 1.0
    for k in range(flat.shape[2]):
        if np.isnan(flat[:, :, k]).any():
            continue
        worst = max(worst, split_rhat(flat[:, :, k]))
    return worst


def rhat_table(draws: PosteriorDraws) -> pd.DataFrame:
    rows = []
    for name in sorted(draws.params):
        if name in SKIPPED:
            continue

        values = draws[name]
        for index in np.ndindex(*values.shape[2:]):
            series = values[(slice(None), slice(None)) + index]
            if np.isnan(series).any():
                continue
            constant = bool(np.ptp(series) == 0)
            rows.append({'parameter': name, 'index': ','.join(str(i) for i in index),
                         'rhat': split_rhat(series), 'mcse': mcse(series),
                         'note': 'zero variance' if constant else ''})

    table = pd.DataFrame(rows, columns=['parameter', 'index', 'rhat', 'mcse', 'note'])
    unconverged = table.loc[table['rhat'] >= RHAT_THRESHOLD]
    if len(unconverged):
        logger.warning("%d of %d parameters have R-hat >= %.1f", len(unconverged), len(table), RHAT_THRESHOLD)
    return table


def rhat_converged(table: pd.DataFrame) -> bool:
    return bool((table['rhat'] < RHAT_THRESHOLD).all())
