import logging
from argparse import ArgumentParser, Namespace

import pandas as pd

from ..errors import EXIT_NONCONVERGED, EXIT_OK
from ..gtheory import gstudy
from ..models.results import VarianceDesign
from ..parser_module import ParserModule
from ..report import write_result
from ._common import add_selection, dataset, missing_note, pick, run_config

logger = logging.getLogger(__name__)


class Parser(ParserModule):
    parser: ArgumentParser

    def init(self, parser: ArgumentParser):
        self.parser = parser
        parser.description = "variance components, generalizability and dependability per family"
        add_selection(parser)
        parser.add_argument('--design', type=VarianceDesign, choices=list(VarianceDesign),
                            default=VarianceDesign.RxSOI)
        parser.add_argument('--teacher-level', choices=['teacher', 'teacher_year'], default='teacher',
                            dest='teacher_level')

    def parser_name(self) -> str:
        return 'gstudy'

    def process(self, ns: Namespace) -> int:
        run = run_config(ns)
        ds = dataset(run)
        design: VarianceDesign = ns.design
        provenance = ds.provenance
        families = pick(ns.families, ds.families, 'families')
        items = pick(ns.items, ds.items, 'items') if design.by_item else [None]
        if not design.by_item and ns.items:
            ds = ds.subset(items=pick(ns.items, ds.items, 'items'))

        results, components = [], []
        for item in items:
            for family in families:
                note = missing_note(ds, item, [family]) if item is not None else None
                if note is not None:
                    results.append({'item': item, 'family': family, 'design': design.value, 'erho2': None,
                                    'phi': None, 'degenerate': None, 'converged': None, 'truncated': '',
                                    'folded': '', 'n': 0, 'note': note})
                    continue

                result = gstudy(ds, design, family, item, ns.teacher_level)
                vc = result.components
                results.append({'item': item or 'all', 'family': family, 'design': design.value,
                                'erho2': result.erho2, 'phi': result.phi, 'degenerate': result.degenerate,
                                'converged': vc.converged, 'truncated': ';'.join(sorted(vc.truncated)),
                                'folded': ';'.join(vc.folded), 'n': vc.n_obs, 'note': ''})
                components.extend({'item': item or 'all', 'family': family, 'design': design.value, 'term': term,
                                   'variance': value} for term, value in sorted(vc.components.items()))

        flags = {'design': design.value, 'teacher_level': ns.teacher_level}
        write_result(pd.DataFrame(results), 'gstudy', run.out, provenance, run.seed, flags)
        write_result(pd.DataFrame(components), 'gstudy_components', run.out, provenance, run.seed, flags)

        unconverged = [r for r in results if r['converged'] is False]
        if unconverged:
            logger.warning("%d variance fits did not converge", len(unconverged))
            return EXIT_NONCONVERGED
        return EXIT_OK
