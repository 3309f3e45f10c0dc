from argparse import ArgumentParser, Namespace

import pandas as pd

from ..concordance import bootstrap_panel, family_concordance, panel_rows
from ..errors import EXIT_OK
from ..labelqual_config import settings
from ..models.results import MetricName
from ..parser_module import ParserModule
from ..report import write_result
from ._common import add_selection, dataset, pick, run_config, split_names

ALL_METRICS = 'all'


class Parser(ParserModule):
    parser: ArgumentParser

    def init(self, parser: ArgumentParser):
        self.parser = parser
        parser.description = "agreement, rank correlation and ICC of each family against a random human"
        add_selection(parser)
        parser.add_argument('--metric', '--metrics', nargs='+', default=[ALL_METRICS], dest='metric',
                            help=f"'{ALL_METRICS}' or metric names: {', '.join(m.value for m in MetricName)}")
        parser.add_argument('-B', '--replicates', '--bootstrap', type=int, default=settings.bootstrap_replicates,
                            help="reference-reassignment bootstrap replicates")
        parser.add_argument('--resample-cells', action='store_true', default=False,
                            help="also resample the paired cells in every replicate")
        parser.add_argument('--no-bootstrap', action='store_true', default=False,
                            help="point estimates for one reference assignment only")

    def parser_name(self) -> str:
        return 'concordance'

    def process(self, ns: Namespace) -> int:
        run = run_config(ns)
        metrics = [m.value for m in MetricName]
        if ALL_METRICS not in split_names(ns.metric):
            metrics = pick(ns.metric, metrics, 'metrics')
        ds = dataset(run)
        items = pick(ns.items, ds.items, 'items')
        families = pick(ns.families, ds.families, 'families')

        rows = []
        for item in items:
            for family in families:
                if ns.no_bootstrap:
                    panel = family_concordance(ds, family, item, run.seed)
                else:
                    panel = bootstrap_panel(ds, family, item, ns.replicates, run.seed, run.alpha, run.threads,
                                            resample_cells=ns.resample_cells)
                rows.extend(row for row in panel_rows(panel, item, family) if row['metric'] in metrics)

        write_result(pd.DataFrame(rows), 'concordance', run.out, ds.provenance, run.seed,
                     {'replicates': 0 if ns.no_bootstrap else ns.replicates, 'resample_cells': ns.resample_cells,
                      'metrics': metrics, 'alpha': run.alpha})
        return EXIT_OK
