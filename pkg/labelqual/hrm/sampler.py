"""
Metropolis-within-Gibbs sampler for the hierarchical rater model.

Update order within one iteration:
  1. ideal categories xi per rated (observation, item) cell, drawn exactly from their categorical full conditional
  2. lesson abilities theta, random-walk Metropolis per observation
  3. teacher-year abilities Theta, conjugate normal draw
  4. latent precision, conjugate Wishart draw
  5. discriminations alpha on the log scale, anchors fixed at 1
  6. step difficulties gamma, one category column at a time
  7. rater bias phi and log-variability log_psi2 per (rater, item, level), random-walk Metropolis
  8. item-level means eta and kappa, conjugate normal draws
  9. the two rater precisions, conjugate gamma draws
With frozen ideal categories only steps 7-9 run.

Random-walk scales adapt toward 20-40% acceptance every ``adapt_every`` burn-in iterations and stay fixed after.
"""
import logging
from functools import partial
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.stats import wishart

from ..dataset import Dataset, teacher_levels
from ..errors import DatasetError, UsageError
from ..models.hrm import HrmConfig, HrmPriors
from ..parallel import derive_seed, map_units
from .draws import PosteriorDraws
from .probs import gpcm_log_probs, sdt_log_lik, sdt_log_table

logger = logging.getLogger(__name__)

LOG_PSI2_BOUNDS = (-18.0, 10.0)
ACCEPT_LOW, ACCEPT_HIGH = 0.2, 0.4
SHRINK, GROW = 0.75, 1.33
NO_LEVEL = 'all'


class HrmData(object):
    """Integer-coded view of the ratings that the sampler works on."""
    observations: List[str]
    teacher_years: List[str]
    items: List[str]
    raters: List[str]
    levels: List[str]
    dimensions: int
    obs_ty: np.ndarray
    item_dim: np.ndarray
    categories: np.ndarray
    kmax: int
    anchors: np.ndarray
    cell_obs: np.ndarray
    cell_item: np.ndarray
    rec_cell: np.ndarray
    rec_x: np.ndarray
    rec_unit: np.ndarray
    unit_item: np.ndarray
    unit_level: np.ndarray
    unit_has_data: np.ndarray
    init_xi: np.ndarray
    frozen_xi: Optional[np.ndarray]
    dropped: int

    def __init__(self, ds: Dataset, config: HrmConfig, frozen_xi: Optional[Dict[Tuple[str, str], int]] = None):
        records = ds.records
        if config.families is not None:
            records = records.loc[records['family'].isin(config.families)]

        if config.covariate:
            levels = teacher_levels(ds, config.covariate)
            if not levels:
                raise UsageError(f"no teacher has a value for attribute {config.covariate!r}")
            records = records.loc[records['teacher_id'].isin(list(levels))]
            record_levels = records['teacher_id'].map(levels)
        else:
            record_levels = pd.Series(NO_LEVEL, index=records.index)

        self.dropped = 0
        if frozen_xi is not None:
            keys = list(zip(records['observation_id'], records['item_id']))
            keep = np.array([k in frozen_xi for k in keys], dtype=bool)
            self.dropped = int((~keep).sum())
            if self.dropped:
                logger.warning("%d ratings fall on cells without a frozen ideal score and were dropped", self.dropped)
            records = records.loc[keep]
            record_levels = record_levels.loc[keep]

        if records.empty:
            raise DatasetError("no ratings left for the rater model")

        self.observations = sorted(records['observation_id'].unique())
        self.items = sorted(records['item_id'].unique())
        self.raters = sorted(records['rater_id'].unique())
        self.levels = sorted(record_levels.unique())

        owners = records.groupby('observation_id', sort=True)[['teacher_id', 'year']].first()
        ty_labels = (owners['teacher_id'] + ':' + owners['year']).to_numpy()
        self.teacher_years = sorted(set(ty_labels))
        self.obs_ty = np.searchsorted(self.teacher_years, ty_labels)

        dims = np.array([(config.item_dimensions or dict()).get(j, ds.scale[j].dimension) for j in self.items])
        self.dimensions = int(dims.max())
        if sorted(set(dims)) != list(range(1, self.dimensions + 1)):
            raise UsageError(f"dimensions {sorted(set(dims))} must cover 1..{self.dimensions} with rated items")
        self.item_dim = dims - 1
        self.categories = np.array([ds.categories(j) for j in self.items])
        self.kmax = int(self.categories.max())
        self.anchors = np.zeros(len(self.items), dtype=bool)
        requested = list(config.anchor_items or [])
        unknown = sorted(set(requested) - set(self.items))
        if unknown:
            raise UsageError(f"anchor items {unknown} are not rated in this fit")
        for m in range(self.dimensions):
            members = np.flatnonzero(self.item_dim == m)
            chosen = [k for k in members if self.items[k] in requested]
            if len(chosen) > 1:
                raise UsageError(f"dimension {m + 1} has more than one anchor item")
            self.anchors[chosen[0] if chosen else members[0]] = True

        o = np.searchsorted(self.observations, records['observation_id'].to_numpy())
        j = np.searchsorted(self.items, records['item_id'].to_numpy())
        r = np.searchsorted(self.raters, records['rater_id'].to_numpy())
        g = np.searchsorted(self.levels, record_levels.to_numpy())
        J, G = len(self.items), len(self.levels)

        cells, self.rec_cell = np.unique(o * J + j, return_inverse=True)
        self.cell_obs, self.cell_item = cells // J, cells % J
        self.rec_x = records['score'].to_numpy(np.int64)
        self.rec_unit = (r * J + j) * G + g

        units = np.arange(len(self.raters) * J * G)
        self.unit_item = (units // G) % J
        self.unit_level = units % G
        self.unit_has_data = np.bincount(self.rec_unit, minlength=len(units)) > 0

        means = np.bincount(self.rec_cell, weights=self.rec_x) / np.bincount(self.rec_cell)
        self.init_xi = np.clip(np.rint(means), 1, self.categories[self.cell_item]).astype(np.int64)

        self.frozen_xi = None
        if frozen_xi is not None:
            self.frozen_xi = np.array([frozen_xi[(self.observations[a], self.items[b])]
                                       for a, b in zip(self.cell_obs, self.cell_item)], dtype=np.int64)
            if np.any(self.frozen_xi > self.categories[self.cell_item]):
                raise DatasetError("frozen ideal scores exceed the item's category count")

        unidentified = int((~self.unit_has_data).sum())
        if unidentified:
            logger.warning("%d (rater, item, level) units have no ratings and are reported as unidentified",
                           unidentified)
        logger.info("rater model data: %d ratings, %d observations, %d teacher-years, %d raters, %d items, "
                    "%d levels, %d dimensions", len(self.rec_x), len(self.observations), len(self.teacher_years),
                    len(self.raters), J, G, self.dimensions)

    @property
    def unit_shape(self) -> Tuple[int, int, int]:
        return len(self.raters), len(self.items), len(self.levels)

    def coords(self) -> Dict[str, List[str]]:
        return {
            'observation': self.observations,
            'teacher_year': self.teacher_years,
            'item': self.items,
            'rater': self.raters,
            'level': self.levels,
            'dimension': [str(m + 1) for m in range(self.dimensions)],
            'category': [str(k + 1) for k in range(self.kmax)],
        }


class ChainState(object):
    theta: np.ndarray
    Theta: np.ndarray
    Tau: np.ndarray
    alpha: np.ndarray
    gamma: np.ndarray
    xi: np.ndarray
    phi: np.ndarray
    log_psi2: np.ndarray
    eta: np.ndarray
    kappa: np.ndarray
    prec_phi: float
    prec_psi: float

    def __init__(self, data: HrmData, priors: HrmPriors, rng: np.random.Generator):
        O, M, J = len(data.observations), data.dimensions, len(data.items)
        _, _, G = data.unit_shape
        U = len(data.unit_item)

        self.theta = rng.normal(0.0, 1.0, (O, M))
        self.Theta = np.zeros((len(data.teacher_years), M))
        self.Tau = np.eye(M)
        self.alpha = np.zeros((J, M))
        self.alpha[np.arange(J), data.item_dim] = np.where(data.anchors, 1.0, np.exp(rng.normal(0.0, 0.1, J)))
        steps = np.arange(data.kmax)
        self.gamma = np.where((steps[None, :] > 0) & (steps[None, :] < data.categories[:, None]),
                              rng.normal(0.0, 0.3, (J, data.kmax)), 0.0)
        self.xi = data.init_xi.copy() if data.frozen_xi is None else data.frozen_xi.copy()
        self.phi = rng.normal(0.0, 0.1, U)
        self.log_psi2 = priors.kappa_mean + rng.normal(0.0, 0.1, U)
        self.eta = np.zeros(J * G)
        self.kappa = np.full(J * G, priors.kappa_mean)
        self.prec_phi = 1.0
        self.prec_psi = 1.0


class Proposal(object):
    """Random-walk scales and acceptance counters for one parameter block."""
    scale: np.ndarray
    accepted: np.ndarray
    tried: int
    total_accepted: np.ndarray
    total_tried: int

    def __init__(self, shape, scale: float):
        self.scale = np.full(shape, scale)
        self.accepted = np.zeros(shape)
        self.tried = 0
        self.total_accepted = np.zeros(shape)
        self.total_tried = 0

    def record(self, accept: np.ndarray, adapting: bool) -> None:
        self.accepted += accept
        self.tried += 1
        if not adapting:
            self.total_accepted += accept
            self.total_tried += 1

    def adapt(self) -> None:
        if self.tried == 0:
            return
        rate = self.accepted / self.tried
        self.scale = np.where(rate < ACCEPT_LOW, self.scale * SHRINK, np.where(rate > ACCEPT_HIGH, self.scale * GROW,
                                                                              self.scale))
        self.accepted[...] = 0
        self.tried = 0

    def rate(self, mask: Optional[np.ndarray] = None) -> Optional[float]:
        if self.total_tried == 0:
            return None
        rates = self.total_accepted / self.total_tried
        if mask is not None:
            rates = rates[mask]
        return float(rates.mean()) if rates.size else None


class HrmChain(object):
    data: HrmData
    config: HrmConfig
    priors: HrmPriors
    rng: np.random.Generator
    state: ChainState
    proposals: Dict[str, Proposal]
    chain: int
    frozen: bool
    wishart_df: float

    def __init__(self, data: HrmData, config: HrmConfig, chain: int):
        self.data = data
        self.config = config
        self.priors = config.priors
        self.chain = chain
        self.rng = np.random.default_rng(derive_seed(config.seed, 'chain', chain))
        self.state = ChainState(data, self.priors, self.rng)
        self.frozen = data.frozen_xi is not None

        J = len(data.items)
        U = len(data.unit_item)
        self.proposals = {
            'theta': Proposal(len(data.observations), 0.5),
            'alpha': Proposal(J, 0.1),
            'gamma': Proposal((J, data.kmax), 0.3),
            'phi': Proposal(U, 0.3),
            'log_psi2': Proposal(U, 0.5),
        }
        self.wishart_df = self.priors.wishart_df or data.dimensions + 1.0

    # -- likelihood pieces

    def _cell_gpcm(self, theta: np.ndarray, alpha: np.ndarray, gamma: np.ndarray) -> np.ndarray:
        d = self.data
        location = np.sum(alpha[d.cell_item] * theta[d.cell_obs], axis=1)
        log_probs = gpcm_log_probs(location, gamma[d.cell_item], d.categories[d.cell_item])
        return log_probs[np.arange(len(d.cell_item)), self.state.xi - 1]

    def _record_sdt(self, phi: np.ndarray, log_psi2: np.ndarray) -> np.ndarray:
        d = self.data
        xi = self.state.xi[d.rec_cell].astype(float)
        return sdt_log_lik(d.rec_x, xi, phi[d.rec_unit], np.exp(log_psi2[d.rec_unit]),
                           d.categories[d.cell_item[d.rec_cell]], d.kmax)

    def _accept(self, log_ratio: np.ndarray) -> np.ndarray:
        return np.log(self.rng.random(log_ratio.shape)) < log_ratio

    # -- updates

    def update_xi(self) -> None:
        d, s = self.data, self.state
        location = np.sum(s.alpha[d.cell_item] * s.theta[d.cell_obs], axis=1)
        log_post = gpcm_log_probs(location, s.gamma[d.cell_item], d.categories[d.cell_item])
        table = sdt_log_table(d.rec_x, s.phi[d.rec_unit], np.exp(s.log_psi2[d.rec_unit]),
                              d.categories[d.cell_item[d.rec_cell]], d.kmax)
        np.add.at(log_post, d.rec_cell, table)
        s.xi = np.argmax(log_post + self.rng.gumbel(size=log_post.shape), axis=1) + 1

    def _theta_prior(self, theta: np.ndarray) -> np.ndarray:
        s = self.state
        dev = theta - s.Theta[self.data.obs_ty]
        return -0.5 * np.einsum('om,mn,on->o', dev, s.Tau, dev)

    def update_theta(self, adapting: bool) -> None:
        d, s = self.data, self.state
        proposal = self.proposals['theta']
        candidate = s.theta + proposal.scale[:, None] * self.rng.normal(size=s.theta.shape)

        n = len(d.observations)
        current = np.bincount(d.cell_obs, self._cell_gpcm(s.theta, s.alpha, s.gamma), minlength=n)
        proposed = np.bincount(d.cell_obs, self._cell_gpcm(candidate, s.alpha, s.gamma), minlength=n)
        accept = self._accept(proposed + self._theta_prior(candidate) - current - self._theta_prior(s.theta))

        s.theta = np.where(accept[:, None], candidate, s.theta)
        proposal.record(accept, adapting)

    def update_Theta(self) -> None:
        d, s = self.data, self.state
        T, M = s.Theta.shape
        counts = np.bincount(d.obs_ty, minlength=T)
        sums = np.zeros((T, M))
        np.add.at(sums, d.obs_ty, s.theta)

        precision = np.eye(M)[None, :, :] + counts[:, None, None] * s.Tau[None, :, :]
        covariance = np.linalg.inv(precision)
        mean = np.einsum('tmn,tn->tm', covariance, sums @ s.Tau.T)
        chol = np.linalg.cholesky(covariance)
        s.Theta = mean + np.einsum('tmn,tn->tm', chol, self.rng.normal(size=(T, M)))

    def update_Tau(self) -> None:
        d, s = self.data, self.state
        M = d.dimensions
        dev = s.theta - s.Theta[d.obs_ty]
        scale = np.linalg.inv(np.eye(M) * self.wishart_df + dev.T @ dev)
        draw = wishart.rvs(df=self.wishart_df + len(dev), scale=scale, random_state=self.rng)
        s.Tau = np.reshape(draw, (M, M))

    def update_alpha(self, adapting: bool) -> None:
        d, s = self.data, self.state
        proposal = self.proposals['alpha']
        J = len(d.items)
        rows = np.arange(J)
        log_alpha = np.log(s.alpha[rows, d.item_dim])
        candidate_log = log_alpha + proposal.scale * self.rng.normal(size=J)
        candidate = s.alpha.copy()
        candidate[rows, d.item_dim] = np.exp(candidate_log)

        current = np.bincount(d.cell_item, self._cell_gpcm(s.theta, s.alpha, s.gamma), minlength=J)
        proposed = np.bincount(d.cell_item, self._cell_gpcm(s.theta, candidate, s.gamma), minlength=J)
        prior = -0.5 * (candidate_log ** 2 - log_alpha ** 2) / self.priors.alpha_log_sd ** 2
        accept = self._accept(proposed - current + prior) & ~d.anchors

        s.alpha[rows, d.item_dim] = np.where(accept, np.exp(candidate_log), s.alpha[rows, d.item_dim])
        proposal.record(accept, adapting)

    def update_gamma(self, adapting: bool) -> None:
        d, s = self.data, self.state
        proposal = self.proposals['gamma']
        J = len(d.items)
        accepted = np.zeros((J, d.kmax), dtype=bool)
        for k in range(1, d.kmax):
            eligible = d.categories > k
            candidate = s.gamma.copy()
            candidate[:, k] += np.where(eligible, proposal.scale[:, k] * self.rng.normal(size=J), 0.0)

            current = np.bincount(d.cell_item, self._cell_gpcm(s.theta, s.alpha, s.gamma), minlength=J)
            proposed = np.bincount(d.cell_item, self._cell_gpcm(s.theta, s.alpha, candidate), minlength=J)
            prior = -0.5 * (candidate[:, k] ** 2 - s.gamma[:, k] ** 2) / self.priors.gamma_sd ** 2
            accept = self._accept(proposed - current + prior) & eligible

            s.gamma[:, k] = np.where(accept, candidate[:, k], s.gamma[:, k])
            accepted[:, k] = accept
        proposal.record(accepted, adapting)

    def update_phi(self, adapting: bool) -> None:
        d, s = self.data, self.state
        proposal = self.proposals['phi']
        U = len(d.unit_item)
        candidate = s.phi + proposal.scale * self.rng.normal(size=U)

        current = np.bincount(d.rec_unit, self._record_sdt(s.phi, s.log_psi2), minlength=U)
        proposed = np.bincount(d.rec_unit, self._record_sdt(candidate, s.log_psi2), minlength=U)
        mean = s.eta[d.unit_item * len(d.levels) + d.unit_level]
        prior = -0.5 * s.prec_phi * ((candidate - mean) ** 2 - (s.phi - mean) ** 2)
        accept = self._accept(proposed - current + prior) & d.unit_has_data

        s.phi = np.where(accept, candidate, s.phi)
        proposal.record(accept, adapting)

    def update_log_psi2(self, adapting: bool) -> None:
        d, s = self.data, self.state
        proposal = self.proposals['log_psi2']
        U = len(d.unit_item)
        candidate = s.log_psi2 + proposal.scale * self.rng.normal(size=U)
        low, high = LOG_PSI2_BOUNDS
        inside = (candidate >= low) & (candidate <= high)
        candidate = np.where(inside, candidate, s.log_psi2)

        current = np.bincount(d.rec_unit, self._record_sdt(s.phi, s.log_psi2), minlength=U)
        proposed = np.bincount(d.rec_unit, self._record_sdt(s.phi, candidate), minlength=U)
        mean = s.kappa[d.unit_item * len(d.levels) + d.unit_level]
        prior = -0.5 * s.prec_psi * ((candidate - mean) ** 2 - (s.log_psi2 - mean) ** 2)
        accept = self._accept(proposed - current + prior) & d.unit_has_data & inside

        s.log_psi2 = np.where(accept, candidate, s.log_psi2)
        proposal.record(accept, adapting)

    def _normal_means(self, values: np.ndarray, precision: float, prior_mean: float, prior_sd: float) -> np.ndarray:
        d = self.data
        groups = len(d.items) * len(d.levels)
        index = (d.unit_item * len(d.levels) + d.unit_level)[d.unit_has_data]
        counts = np.bincount(index, minlength=groups)
        sums = np.bincount(index, values[d.unit_has_data], minlength=groups)

        prior_precision = 1.0 / prior_sd ** 2
        post_precision = prior_precision + counts * precision
        post_mean = (prior_precision * prior_mean + precision * sums) / post_precision
        return post_mean + self.rng.normal(size=groups) / np.sqrt(post_precision)

    def _precision(self, values: np.ndarray, means: np.ndarray, shape: float, rate: float) -> float:
        d = self.data
        dev = (values - means[d.unit_item * len(d.levels) + d.unit_level])[d.unit_has_data]
        return float(self.rng.gamma(shape + 0.5 * len(dev), 1.0 / (rate + 0.5 * float(dev @ dev))))

    def update_hyper(self) -> None:
        s, p = self.state, self.priors
        s.eta = self._normal_means(s.phi, s.prec_phi, 0.0, p.eta_sd)
        s.kappa = self._normal_means(s.log_psi2, s.prec_psi, p.kappa_mean, p.kappa_sd)
        s.prec_phi = self._precision(s.phi, s.eta, p.phi_shape, p.phi_rate)
        s.prec_psi = self._precision(s.log_psi2, s.kappa, p.psi_shape, p.psi_rate)

    def step(self, adapting: bool) -> None:
        if not self.frozen:
            self.update_xi()
            self.update_theta(adapting)
            self.update_Theta()
            self.update_Tau()
            self.update_alpha(adapting)
            self.update_gamma(adapting)
        self.update_phi(adapting)
        self.update_log_psi2(adapting)
        self.update_hyper()

    # -- driver

    def snapshot(self) -> Dict[str, np.ndarray]:
        d, s = self.data, self.state
        R, J, G = d.unit_shape
        hidden = ~d.unit_has_data
        xi = np.zeros((len(d.observations), J), dtype=np.int8)
        xi[d.cell_obs, d.cell_item] = s.xi

        values = {
            'xi': xi,
            'phi': np.where(hidden, np.nan, s.phi).reshape(R, J, G),
            'log_psi2': np.where(hidden, np.nan, s.log_psi2).reshape(R, J, G),
            'eta': s.eta.reshape(J, G).copy(),
            'kappa': s.kappa.reshape(J, G).copy(),
            'prec_phi': np.array(s.prec_phi),
            'prec_psi': np.array(s.prec_psi),
        }
        if not self.frozen:
            values.update({
                'theta': s.theta.copy(),
                'Theta': s.Theta.copy(),
                'Sigma': np.linalg.inv(s.Tau),
                'alpha': s.alpha.copy(),
                'gamma': s.gamma.copy(),
            })
        return values

    def run(self) -> Tuple[Dict[str, np.ndarray], Dict[str, Optional[float]]]:
        config = self.config
        kept: Dict[str, List[np.ndarray]] = dict()
        for iteration in range(config.iterations):
            adapting = iteration < config.burn_in
            self.step(adapting)

            if adapting and (iteration + 1) % config.adapt_every == 0:
                for proposal in self.proposals.values():
                    proposal.adapt()
                logger.debug("chain %d: adapted proposal scales at iteration %d", self.chain, iteration + 1)

            after = iteration - config.burn_in
            if after >= 0 and after % config.thin == 0 and after // config.thin < config.kept_draws:
                for name, value in self.snapshot().items():
                    kept.setdefault(name, []).append(value)

        d = self.data
        acceptance = {
            'phi': self.proposals['phi'].rate(d.unit_has_data),
            'log_psi2': self.proposals['log_psi2'].rate(d.unit_has_data),
        }
        if not self.frozen:
            acceptance['theta'] = self.proposals['theta'].rate()
            acceptance['alpha'] = self.proposals['alpha'].rate(~d.anchors)
        return {name: np.stack(values) for name, values in kept.items()}, acceptance


def _run_chain(data: HrmData, config: HrmConfig,
               chain: int) -> Tuple[Dict[str, np.ndarray], Dict[str, Optional[float]]]:
    logger.info("chain %d: %d iterations, %d burn-in, thin %d", chain, config.iterations, config.burn_in, config.thin)
    return HrmChain(data, config, chain).run()


def fit(ds: Dataset, config: HrmConfig, frozen: Optional[PosteriorDraws] = None, threads: int = 1) -> PosteriorDraws:
    """
    Samples the rater model posterior.

    :param ds: ratings, optionally restricted by ``config.families``
    :param config: chains, schedule, priors, covariate
    :param frozen: a human-only posterior whose modal ideal scores are held fixed (needs freeze_true_scores)
    :param threads: chains run in parallel processes when above 1
    :return: post-burn-in draws from every chain
    """
    if config.freeze_true_scores and frozen is None:
        raise UsageError("freeze_true_scores needs a posterior to take the ideal scores from")
    if frozen is not None and not config.freeze_true_scores:
        config = config.model_copy(update={'freeze_true_scores': True})

    data = HrmData(ds, config, frozen.xi_mode() if frozen is not None else None)
    results = map_units(partial(_run_chain, data, config), range(config.chains), threads)

    params = {name: np.stack([r[0][name] for r in results]) for name in results[0][0]}
    meta = {
        'seed': config.seed,
        'config_digest': config.digest(),
        'config': config.model_dump(mode='json'),
        'dataset': ds.provenance,
        'rater_family': {r: ds.roster[r] for r in data.raters},
        'covariate': config.covariate,
        'frozen': frozen is not None,
        'frozen_from': frozen.meta.get('config_digest') if frozen is not None else None,
        'dropped_ratings': data.dropped,
        'acceptance': [r[1] for r in results],
    }
    return PosteriorDraws(params, data.coords(), meta)


class TwoPhaseFit(NamedTuple):
    human: PosteriorDraws
    models: Optional[PosteriorDraws]


def fit_two_phase(ds: Dataset, config: HrmConfig, threads: int = 1) -> TwoPhaseFit:
    """Human-only fit first, then every other family with the human fit's ideal scores frozen."""
    human_family = ds.human_family
    human = fit(ds, config.model_copy(update={'families': [human_family], 'freeze_true_scores': False}),
                threads=threads)

    others = [f for f in ds.families if f != human_family]
    if config.families is not None:
        others = [f for f in others if f in config.families]
    if not others:
        logger.warning("no non-human families to fit against the frozen ideal scores")
        return TwoPhaseFit(human, None)

    models = fit(ds, config.model_copy(update={'families': others, 'freeze_true_scores': True}), frozen=human,
                 threads=threads)
    return TwoPhaseFit(human, models)
