import logging
from argparse import ArgumentParser, Namespace

from ..dataset import score_distributions
from ..errors import EXIT_OK
from ..parser_module import ParserModule
from ..report import write_result
from ._common import dataset, run_config

logger = logging.getLogger(__name__)


class Parser(ParserModule):
    parser: ArgumentParser

    def init(self, parser: ArgumentParser):
        self.parser = parser
        parser.description = "validate a ratings bundle and write per-family score distributions"

    def parser_name(self) -> str:
        return 'validate'

    def process(self, ns: Namespace) -> int:
        run = run_config(ns)
        ds = dataset(run)
        write_result(score_distributions(ds), 'distributions', run.out, ds.provenance, None,
                     {'families': ds.families, 'items': ds.items, 'teachers': len(ds.teachers),
                      'ratings': len(ds.records)})
        logger.info("dataset %s is valid", ds.provenance[:12])
        return EXIT_OK
