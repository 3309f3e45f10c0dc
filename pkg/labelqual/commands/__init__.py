import logging
from argparse import ArgumentError, ArgumentParser, Namespace
from importlib import import_module
from os import listdir
from os.path import basename, dirname, isfile, join
from typing import Dict, Optional, Tuple

from ..errors import EXIT_USAGE
from ..labelqual_config import LABELQUAL_VERSION, settings
from ..parser_module import ParserModule

logger = logging.getLogger(__name__)

PARSER_NAME: str = "Parser"
PROG: str = "labelqual"


class _DefunctModule(ParserModule):
    name: str

    def __init__(self, name: str = "defunct"):
        self.name = name

    def init(self, parser: ArgumentParser):
        return None

    def parser_name(self) -> str:
        return self.name

    def process(self, ns: Namespace) -> int:
        logger.error("subcommand module %s failed to load", self.name)
        return EXIT_USAGE


class HelpShown(Exception):
    pass


class LabelQualArgumentParser(ArgumentParser):
    def error(self, message: str):
        raise ArgumentError(None, f"{self.format_usage()}{self.prog}: error: {message}")

    def exit(self, status: int = 0, message: Optional[str] = None):
        # argparse calls this after printing --help or --version
        if status == 0:
            raise HelpShown()
        raise ArgumentError(None, message or self.format_usage())


def add_global_flags(parser: ArgumentParser) -> None:
    """Flags every subcommand accepts after its name."""
    parser.add_argument('--ratings', type=str, default=None, help="ratings CSV")
    parser.add_argument('--scale', type=str, default=None, help="scale JSON")
    parser.add_argument('--roster', type=str, default=None, help="rater roster CSV")
    parser.add_argument('--attributes', type=str, default=None, help="teacher attributes CSV")
    parser.add_argument('--seed', type=int, default=None, help="master seed; derived from OS entropy when omitted")
    parser.add_argument('--alpha', type=float, default=settings.alpha, help="1 - interval coverage")
    parser.add_argument('--threads', type=int, default=settings.threads, help="worker processes")
    parser.add_argument('--out', type=str, default='.', help="output directory")
    parser.add_argument('--log-level', type=str, default=settings.log_level, dest='log_level')


def build_parser() -> Tuple[ArgumentParser, Dict[str, ParserModule]]:
    """The top-level parser with one subparser per plugin module found in this package."""
    parser = LabelQualArgumentParser(prog=PROG, description="annotation quality under low reliability")
    parser.add_argument('--version', action='version', version=f"%(prog)s {LABELQUAL_VERSION}")
    subparsers = parser.add_subparsers(dest='command', parser_class=LabelQualArgumentParser)

    modules: Dict[str, ParserModule] = dict()
    imports_dir = dirname(__file__)
    for module in sorted(listdir(imports_dir)):
        if not isfile(join(imports_dir, module)) or module == basename(__file__):
            continue
        if not module.endswith('.py') or module.startswith('_'):
            continue

        mod_name = '.'.join([__name__, module[:-3]])
        logger.debug("loading subcommand module %s", mod_name)
        mod = import_module(mod_name)
        parser_module = getattr(mod, PARSER_NAME, None)
        parser_module = parser_module() if parser_module is not None else None
        if not isinstance(parser_module, ParserModule):
            parser_module = _DefunctModule(module[:-3])

        sub = subparsers.add_parser(parser_module.parser_name())
        add_global_flags(sub)
        parser_module.init(sub)
        modules[parser_module.parser_name()] = parser_module
    return parser, modules
