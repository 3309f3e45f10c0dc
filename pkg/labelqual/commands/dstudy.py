import logging
from argparse import ArgumentParser, Namespace

import pandas as pd

from ..dstudy import crossover, family_components, sweep_all
from ..errors import EXIT_OK, UsageError
from ..parser_module import ParserModule
from ..report import write_result
from ._common import add_selection, dataset, missing_note, pick, run_config

logger = logging.getLogger(__name__)

SCENARIOS = ('human', 'second-human', 'hil', 'ensemble')
COLUMNS = ['item', 'scenario', 'n_obs', 'phi_tilde', 'human_minutes', 'model_minutes', 'note']


class Parser(ParserModule):
    parser: ArgumentParser

    def init(self, parser: ArgumentParser):
        self.parser = parser
        parser.description = "projected dependability of teacher scores under alternative rating designs"
        add_selection(parser, families=False)
        parser.add_argument('--model-family', type=str, default=None, dest='model_family',
                            help="family the human-in-the-loop scenarios pair with the humans")
        parser.add_argument('--max-obs', type=int, default=10, dest='max_obs')
        parser.add_argument('--baseline-obs', type=int, default=None, dest='baseline_obs',
                            help="human-only visit count the crossover search tries to match")
        parser.add_argument('--scenarios', '--scenario', nargs='+', default=None,
                            help=f"any of {', '.join(SCENARIOS)} (default: every feasible one)")

    def parser_name(self) -> str:
        return 'dstudy'

    def process(self, ns: Namespace) -> int:
        run = run_config(ns)
        scenarios = pick(ns.scenarios, SCENARIOS, 'scenarios') if ns.scenarios else None
        ds = dataset(run)
        if ns.max_obs < 1:
            raise UsageError("--max-obs must be at least 1")
        items = pick(ns.items, ds.items, 'items')
        if ns.model_family is not None and ns.model_family not in ds.families:
            raise UsageError(f"unknown model family {ns.model_family!r}; known: {ds.families}")

        curves, crossovers = [], dict()
        for item in items:
            note = missing_note(ds, item, [ds.human_family, ns.model_family])
            if note is not None:
                curves.append(pd.DataFrame([{'item': item, 'note': note}]))
                crossovers[item] = None
                continue

            human = family_components(ds, item, ds.human_family)
            model = family_components(ds, item, ns.model_family) if ns.model_family else None
            curve = sweep_all(human, model, ns.max_obs, scenarios)
            curve.insert(0, 'item', item)
            curve['note'] = ''
            curves.append(curve)

            if model is not None and ns.baseline_obs:
                found = crossover(human, model, ns.baseline_obs)
                crossovers[item] = found.model_dump() if found is not None else None

        frame = pd.concat(curves, ignore_index=True).reindex(columns=COLUMNS)
        frame['n_obs'] = frame['n_obs'].astype('Int64')
        write_result(frame, 'dstudy', run.out, ds.provenance, run.seed,
                     {'model_family': ns.model_family, 'max_obs': ns.max_obs, 'crossover': crossovers})
        return EXIT_OK
