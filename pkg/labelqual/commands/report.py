from argparse import ArgumentParser, Namespace

from ..errors import EXIT_OK
from ..parser_module import ParserModule
from ..report import build_panels, emit, load_results
from ._common import run_config


class Parser(ParserModule):
    parser: ArgumentParser

    def init(self, parser: ArgumentParser):
        self.parser = parser
        parser.description = "assemble analysis outputs into plot-ready panels and a verdict grid"
        parser.add_argument('--in', type=str, required=True, dest='in_dir', help="directory of analysis outputs")

    def parser_name(self) -> str:
        return 'report'

    def process(self, ns: Namespace) -> int:
        run = run_config(ns)
        emit(build_panels(load_results(ns.in_dir)), run.out)
        return EXIT_OK
