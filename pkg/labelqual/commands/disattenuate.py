from argparse import ArgumentParser, Namespace
from typing import List, Tuple

import pandas as pd

from ..concordance import family_concordance
from ..dataset import Dataset
from ..disattenuation import analyze_item, gap_row, result_row
from ..errors import EXIT_OK
from ..labelqual_config import settings
from ..models.results import MetricName, VarianceDesign
from ..parser_module import ParserModule
from ..report import write_result
from ._common import add_selection, dataset, missing_note, pick, run_config


def family_pairs(ds: Dataset, requested) -> List[Tuple[str, str]]:
    """The humans against every other family, or exactly the two families named when neither is human."""
    families = pick(requested, ds.families, 'families')
    if requested and len(families) == 2 and ds.human_family not in families:
        return [(families[0], families[1])]
    return [(ds.human_family, f) for f in families if f != ds.human_family]


class Parser(ParserModule):
    parser: ArgumentParser

    def init(self, parser: ArgumentParser):
        self.parser = parser
        parser.description = "cross-lesson correlation of each family with the humans, corrected for unreliability"
        add_selection(parser)
        parser.add_argument('-B', '--replicates', '--bootstrap', type=int, default=settings.bootstrap_replicates)
        parser.add_argument('--design', type=VarianceDesign, choices=[VarianceDesign.RxOI, VarianceDesign.RxSOI],
                            default=VarianceDesign.RxSOI, help="design the reliabilities come from")
        parser.add_argument('--level', choices=['lesson', 'segment'], default='lesson')
        parser.add_argument('--resample-reliabilities', action='store_true', default=False,
                            dest='resample_reliabilities', help="refit both reliabilities in every resample")

    def parser_name(self) -> str:
        return 'disattenuate'

    def process(self, ns: Namespace) -> int:
        run = run_config(ns)
        ds = dataset(run)
        items = pick(ns.items, ds.items, 'items')
        pairs = family_pairs(ds, ns.families)

        rows = []
        for item in items:
            for family_a, family_b in pairs:
                note = missing_note(ds, item, [family_a, family_b])
                if note is not None:
                    rows.append(gap_row(item, family_a, family_b, note))
                    continue

                concordance = None
                if family_a == ds.human_family:
                    concordance = family_concordance(ds, family_b, item, run.seed)[MetricName.PEARSON_R].estimate
                result = analyze_item(ds, item, family_a, family_b, run.seed, ns.replicates, run.alpha, ns.design,
                                      concordance_corr=concordance, level=ns.level,
                                      resample_reliabilities=ns.resample_reliabilities)
                rows.append(result_row(result))

        write_result(pd.DataFrame(rows), 'disattenuation', run.out, ds.provenance, run.seed,
                     {'replicates': ns.replicates, 'design': ns.design.value, 'level': ns.level,
                      'resample_reliabilities': ns.resample_reliabilities, 'alpha': run.alpha})
        return EXIT_OK
