"""
Seed derivation and ordered fan-out.

Every stochastic unit of work (a bootstrap replicate, an MCMC chain, a per-item fit) draws from its own
generator seeded by ``derive_seed(seed, *unit_keys)``, so results never depend on how many workers ran them.
"""
import hashlib
import logging
import secrets
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Iterable, List, Optional, TypeVar

import numpy as np

logger = logging.getLogger(__name__)

T = TypeVar('T')
R = TypeVar('R')

_SEED_MASK = (1 << 63) - 1


def derive_seed(seed: int, *keys: Any) -> int:
    digest = hashlib.sha256(repr((int(seed),) + tuple(str(k) for k in keys)).encode('utf-8')).digest()
    return int.from_bytes(digest[:8], 'big') & _SEED_MASK


def derive_rng(seed: int, *keys: Any) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *keys))


def resolve_seed(seed: Optional[int]) -> int:
    if seed is not None:
        return int(seed)

    seed = secrets.randbits(63)
    logger.warning("no --seed given; derived seed %d from OS entropy", seed)
    return seed


def map_units(fn: Callable[[T], R], units: Iterable[T], threads: int = 1) -> List[R]:
    units = list(units)
    if threads <= 1 or len(units) <= 1:
        return [fn(u) for u in units]

    chunksize = max(1, len(units) // (threads * 4))
    with ProcessPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(fn, units, chunksize=chunksize))
