import json
import logging
from argparse import ArgumentParser, Namespace
from pathlib import Path
from typing import Dict, List, Optional

import pandas as pd
from pydantic import ValidationError

from ..errors import EXIT_NONCONVERGED, EXIT_OK, SchemaError, UsageError
from ..hrm import (PosteriorDraws, fairness_contrast, fit, fit_two_phase, rhat_converged, rhat_table,
                   summarize_bias, summary_rows)
from ..hrm.diagnostics import MIN_DRAWS
from ..labelqual_config import RunConfig
from ..models.hrm import HrmConfig
from ..parser_module import ParserModule
from ..report import write_result
from ._common import dataset, other_families, run_config, split_names

logger = logging.getLogger(__name__)

SCHEDULE_FLAGS = ('chains', 'iterations', 'burn_in', 'thin', 'covariate')


def load_config(path: Optional[str]) -> Dict:
    if path is None:
        return dict()
    try:
        return json.loads(Path(path).read_text(encoding='utf-8'))
    except FileNotFoundError:
        raise SchemaError(f"hrm config not found: {path}")
    except json.JSONDecodeError as e:
        raise SchemaError(f"hrm config {path} is not valid JSON: {e}")


def summarize(fits: Dict[str, PosteriorDraws], run: RunConfig, focal: Optional[List[str]],
              reference: Optional[str], dataset_digest: Optional[str]) -> int:
    """Writes hrm.csv (bias and fairness per rater) and hrm_rhat.csv for every fit; exit 2 when any R-hat >= 1.1."""
    rows, rhats = [], []
    all_converged = True
    for name, draws in sorted(fits.items()):
        contrasts = None
        if len(draws.coords['level']) > 1:
            contrasts = fairness_contrast(draws, focal, reference, run.alpha)
        families = draws.meta.get('rater_family', dict())
        for row in summary_rows(summarize_bias(draws, run.alpha), contrasts):
            rows.append(dict(row, fit=name, family=families.get(row['rater'], '')))

        if draws.draws < MIN_DRAWS:
            logger.warning("fit %s kept only %d draws per chain; R-hat needs %d", name, draws.draws, MIN_DRAWS)
            all_converged = False
            continue
        table = rhat_table(draws)
        all_converged = all_converged and rhat_converged(table)
        table.insert(0, 'fit', name)
        rhats.append(table)

    seeds = sorted({d.meta.get('seed') for d in fits.values()})
    flags = {'fits': sorted(fits), 'config_digests': {n: d.meta.get('config_digest') for n, d in sorted(fits.items())},
             'converged': all_converged}
    write_result(pd.DataFrame(rows), 'hrm', run.out, dataset_digest, seeds[0] if len(seeds) == 1 else None, flags)
    rhat_frame = pd.concat(rhats, ignore_index=True) if rhats else pd.DataFrame(columns=['fit', 'parameter'])
    write_result(rhat_frame, 'hrm_rhat', run.out, dataset_digest, None, flags)

    if not all_converged:
        logger.warning("the rater model did not converge; results are written but should not be trusted")
        return EXIT_NONCONVERGED
    return EXIT_OK


class Parser(ParserModule):
    parser: ArgumentParser

    def init(self, parser: ArgumentParser):
        self.parser = parser
        parser.description = "hierarchical rater model: fit posteriors or summarize saved draws"
        parser.add_argument('action', choices=['fit', 'summarize'])
        parser.add_argument('--config', type=str, default=None, help="HRM config JSON")
        parser.add_argument('--chains', type=int, default=None)
        parser.add_argument('--iterations', '--iters', type=int, default=None, dest='iterations')
        parser.add_argument('--burn-in', '--burnin', type=int, default=None, dest='burn_in')
        parser.add_argument('--thin', type=int, default=None)
        parser.add_argument('--covariate', type=str, default=None, help="teacher attribute for fairness contrasts")
        parser.add_argument('--families', '--family', nargs='+', default=None)
        parser.add_argument('--joint', action='store_true', default=False,
                            help="one fit over all families instead of human first, models on frozen ideal scores")
        parser.add_argument('--freeze-from', type=str, default=None, dest='freeze_from',
                            help="saved human posterior whose ideal scores are frozen")
        parser.add_argument('--draws', nargs='+', default=None, help="saved posteriors to summarize")
        parser.add_argument('--focal', nargs='+', default=None, help="attribute levels contrasted with --reference")
        parser.add_argument('--reference', type=str, default=None)

    def parser_name(self) -> str:
        return 'hrm'

    def _config(self, ns: Namespace, run: RunConfig) -> HrmConfig:
        values = load_config(ns.config)
        values.update({k: getattr(ns, k) for k in SCHEDULE_FLAGS if getattr(ns, k) is not None})
        values['seed'] = run.seed
        if ns.families:
            values['families'] = split_names(ns.families)
        try:
            return HrmConfig.model_validate(values)
        except ValidationError as e:
            raise SchemaError(f"hrm config: {e}")

    def _fit(self, ns: Namespace, run: RunConfig) -> int:
        ds = dataset(run)
        config = self._config(ns, run)
        if config.covariate is not None and config.covariate not in ds.attributes.attribute_names():
            raise UsageError(f"no teacher attribute {config.covariate!r}; known: {ds.attributes.attribute_names()}")

        fits: Dict[str, PosteriorDraws] = dict()
        if ns.freeze_from:
            frozen = PosteriorDraws.load(ns.freeze_from)
            others = other_families(ds, ns.families)
            fits['models'] = fit(ds, config.model_copy(update={'families': others, 'freeze_true_scores': True}),
                                 frozen=frozen, threads=run.threads)
        elif ns.joint:
            fits['joint'] = fit(ds, config, threads=run.threads)
        else:
            two_phase = fit_two_phase(ds, config, threads=run.threads)
            fits['human'] = two_phase.human
            if two_phase.models is not None:
                fits['models'] = two_phase.models

        for name, draws in fits.items():
            draws.save(Path(run.out) / f"hrm_{name}.npz")
        return summarize(fits, run, ns.focal, ns.reference, ds.provenance)

    def _summarize(self, ns: Namespace, run: RunConfig) -> int:
        if not ns.draws:
            raise UsageError("hrm summarize needs --draws")
        fits = {Path(p).stem: PosteriorDraws.load(p) for p in ns.draws}
        digests = {d.meta.get('dataset') for d in fits.values()}
        if len(digests) > 1:
            raise UsageError("the posteriors to summarize come from different datasets")
        return summarize(fits, run, ns.focal, ns.reference, digests.pop())

    def process(self, ns: Namespace) -> int:
        run = run_config(ns)
        if ns.action == 'fit':
            return self._fit(ns, run)
        return self._summarize(ns, run)
