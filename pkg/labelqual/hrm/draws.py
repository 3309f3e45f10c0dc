import io
import json
import logging
import zipfile
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

import numpy as np

from ..errors import DatasetError

logger = logging.getLogger(__name__)

HEADER_KEY = '__header__'
FORMAT_VERSION = 1
# fixed member timestamp so identical draws give identical files
ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)

PARAMETER_DIMS: Dict[str, Tuple[str, ...]] = {
    'theta': ('observation', 'dimension'),
    'Theta': ('teacher_year', 'dimension'),
    'Sigma': ('dimension', 'dimension'),
    'xi': ('observation', 'item'),
    'alpha': ('item', 'dimension'),
    'gamma': ('item', 'category'),
    'phi': ('rater', 'item', 'level'),
    'log_psi2': ('rater', 'item', 'level'),
    'eta': ('item', 'level'),
    'kappa': ('item', 'level'),
    'prec_phi': (),
    'prec_psi': (),
}


class PosteriorDraws(object):
    """
    Post-burn-in MCMC draws. Every parameter array has shape (chains, draws, *dims) where dims are named in
    PARAMETER_DIMS and labelled by ``coords``. Rater parameters without any data are NaN; ``xi`` is 0 where
    the (observation, item) cell was never rated.
    """
    params: Dict[str, np.ndarray]
    coords: Dict[str, List[str]]
    meta: Dict[str, Any]

    def __init__(self, params: Dict[str, np.ndarray], coords: Dict[str, List[str]], meta: Dict[str, Any]):
        shapes = {p.shape[:2] for p in params.values()}
        if len(shapes) != 1:
            raise ValueError(f"parameters disagree on (chains, draws): {sorted(shapes)}")

        for name, values in params.items():
            expected = tuple(len(coords[d]) for d in PARAMETER_DIMS[name])
            if values.shape[2:] != expected:
                raise ValueError(f"{name} has shape {values.shape[2:]}, coordinates imply {expected}")

        self.params = params
        self.coords = coords
        self.meta = meta

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    @property
    def chains(self) -> int:
        return next(iter(self.params.values())).shape[0]

    @property
    def draws(self) -> int:
        return next(iter(self.params.values())).shape[1]

    def stacked(self, name: str) -> np.ndarray:
        values = self.params[name]
        return values.reshape((-1,) + values.shape[2:])

    def xi_mode(self) -> Dict[Tuple[str, str], int]:
        """Posterior modal ideal category for every rated (observation, item) cell."""
        xi = self.stacked('xi')
        kmax = int(xi.max())
        counts = np.stack([(xi == k).sum(axis=0) for k in range(1, kmax + 1)], axis=-1)
        mode = counts.argmax(axis=-1) + 1
        rated = counts.sum(axis=-1) > 0

        observations, items = self.coords['observation'], self.coords['item']
        return {(observations[o], items[j]): int(mode[o, j]) for o, j in zip(*np.nonzero(rated))}

    def header(self) -> Dict[str, Any]:
        return {
            'format_version': FORMAT_VERSION,
            'parameters': {n: {'shape': list(v.shape), 'dtype': str(v.dtype), 'dims': list(PARAMETER_DIMS[n])}
                           for n, v in sorted(self.params.items())},
            'coords': self.coords,
            'meta': self.meta,
        }

    def save(self, path: Union[str, Path]) -> Path:
        """Writes an .npz archive whose bytes depend only on the draws and header."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        arrays = {HEADER_KEY: np.array(json.dumps(self.header(), sort_keys=True))}
        arrays.update(sorted(self.params.items()))
        with zipfile.ZipFile(path, 'w', compression=zipfile.ZIP_DEFLATED) as archive:
            for name, values in arrays.items():
                buffer = io.BytesIO()
                np.lib.format.write_array(buffer, np.asanyarray(values), allow_pickle=False)
                entry = zipfile.ZipInfo(f"{name}.npy", date_time=ZIP_EPOCH)
                entry.compress_type = zipfile.ZIP_DEFLATED
                archive.writestr(entry, buffer.getvalue())
        logger.info("wrote %d chains x %d draws to %s", self.chains, self.draws, path)
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'PosteriorDraws':
        try:
            with np.load(path, allow_pickle=False) as data:
                header = json.loads(str(data[HEADER_KEY]))
                params = {n: data[n] for n in header['parameters']}
        except (OSError, KeyError, ValueError) as e:
            raise DatasetError(f"cannot read posterior draws from {path}: {e}")

        if header.get('format_version') != FORMAT_VERSION:
            raise DatasetError(f"unsupported posterior file version {header.get('format_version')}")
        return cls(params, header['coords'], header['meta'])
