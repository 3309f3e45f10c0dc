"""
Category probabilities for the two stages of the rater model.

Ideal stage: multidimensional generalized partial credit model. Rater stage: a discretized normal
centred on the ideal category shifted by the rater's bias, with the rater's variability as its width.
Categories are 1..K throughout; padded columns beyond an item's K carry -inf log probability.
"""
import numpy as np
from scipy.special import logsumexp

PSI2_FLOOR = 1e-8


def gpcm_probs(theta_row: np.ndarray, alpha_row: np.ndarray, gamma_steps: np.ndarray) -> np.ndarray:
    """
    :param theta_row: latent ability, length M
    :param alpha_row: discriminations, length M
    :param gamma_steps: step difficulties, length K, first entry 0
    :return: P(category = 1..K)
    """
    gamma_steps = np.asarray(gamma_steps, dtype=float)
    if len(gamma_steps) < 2:
        raise ValueError("an item needs at least two categories")

    location = float(np.dot(alpha_row, theta_row))
    logits = np.arange(len(gamma_steps)) * location - np.cumsum(gamma_steps)
    return np.exp(logits - logsumexp(logits))


def gpcm_log_probs(location: np.ndarray, gamma: np.ndarray, categories: np.ndarray) -> np.ndarray:
    """
    Row-wise log category probabilities.

    :param location: alpha . theta per row, shape (N,)
    :param gamma: step difficulties per row, shape (N, Kmax)
    :param categories: K per row, shape (N,)
    :return: shape (N, Kmax)
    """
    kmax = gamma.shape[1]
    steps = np.arange(kmax)
    logits = steps[None, :] * location[:, None] - np.cumsum(gamma, axis=1)
    logits = np.where(steps[None, :] < categories[:, None], logits, -np.inf)
    return logits - logsumexp(logits, axis=1, keepdims=True)


def sdt_probs(xi: int, phi: float, psi2: float, K: int) -> np.ndarray:
    """P(observed = 1..K | ideal category xi, bias phi, variability psi2)."""
    k = np.arange(1, K + 1, dtype=float)
    centre = xi + phi
    if psi2 < PSI2_FLOOR:
        mass = np.zeros(K)
        mass[int(np.argmin(np.abs(k - centre)))] = 1.0
        return mass

    logits = -(k - centre) ** 2 / (2.0 * psi2)
    return np.exp(logits - logsumexp(logits))


def _sdt_logits(centre: np.ndarray, psi2: np.ndarray, categories: np.ndarray, kmax: int) -> np.ndarray:
    k = np.arange(1, kmax + 1, dtype=float)
    logits = -(k[None, :] - centre[:, None]) ** 2 / (2.0 * psi2[:, None])
    return np.where(k[None, :] <= categories[:, None], logits, -np.inf)


def sdt_log_lik(x: np.ndarray, xi: np.ndarray, phi: np.ndarray, psi2: np.ndarray, categories: np.ndarray,
                kmax: int) -> np.ndarray:
    """log P(x | xi, phi, psi2) per record; all arguments are per-record arrays."""
    logits = _sdt_logits(xi + phi, psi2, categories, kmax)
    rows = np.arange(len(x))
    return logits[rows, x - 1] - logsumexp(logits, axis=1)


def sdt_prob_table(xi: np.ndarray, phi: np.ndarray, psi2: np.ndarray, categories: np.ndarray,
                   kmax: int) -> np.ndarray:
    """P(observed = 1..Kmax) per record, with the near-zero-variability rows collapsed onto one category."""
    centre = xi + phi
    sharp = psi2 < PSI2_FLOOR
    logits = _sdt_logits(centre, np.where(sharp, 1.0, psi2), categories, kmax)
    probs = np.exp(logits - logsumexp(logits, axis=1, keepdims=True))

    if sharp.any():
        k = np.arange(1, kmax + 1, dtype=float)
        distance = np.where(k[None, :] <= categories[:, None], np.abs(k[None, :] - centre[:, None]), np.inf)
        nearest = np.argmin(distance, axis=1)
        probs[sharp] = 0.0
        probs[np.flatnonzero(sharp), nearest[sharp]] = 1.0
    return probs


def sdt_log_table(x: np.ndarray, phi: np.ndarray, psi2: np.ndarray, categories: np.ndarray,
                  kmax: int) -> np.ndarray:
    """log P(x | xi = k) for every candidate k = 1..Kmax, shape (N, Kmax)."""
    n = len(x)
    table = np.empty((n, kmax))
    for k in range(1, kmax + 1):
        table[:, k - 1] = sdt_log_lik(x, np.full(n, float(k)), phi, psi2, categories, kmax)
    return table
