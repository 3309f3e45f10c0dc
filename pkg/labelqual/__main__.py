#!/usr/bin/env python3
import logging
import sys
from argparse import ArgumentError, Namespace
from typing import List, Optional

from pydantic import ValidationError

from .commands import HelpShown, build_parser
from .errors import EXIT_DATA, EXIT_OK, EXIT_USAGE, LabelQualError
from .labelqual_config import RunConfig
from .parallel import resolve_seed

# subcommands that draw random numbers; the rest never need an entropy-derived seed
STOCHASTIC = ('concordance', 'disattenuate', 'hrm', 'synth')

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

logger = logging.getLogger("labelqual")


def _run_config(ns: Namespace) -> RunConfig:
    seed = resolve_seed(ns.seed) if ns.command in STOCHASTIC else (ns.seed or 0)
    return RunConfig(command=ns.command, ratings=ns.ratings, scale=ns.scale, roster=ns.roster,
                     attributes=ns.attributes, seed=seed, alpha=ns.alpha, threads=ns.threads, out=ns.out,
                     log_level=ns.log_level)


def main(argv: Optional[List[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    parser, modules = build_parser()
    try:
        ns: Namespace = parser.parse_args(argv)
    except HelpShown:
        return EXIT_OK
    except ArgumentError as e:
        print(e.message, file=sys.stderr)
        return EXIT_USAGE

    if not ns.command:
        print(parser.format_usage(), file=sys.stderr, end='')
        return EXIT_USAGE

    level = str(ns.log_level).upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format=LOG_FORMAT)
    try:
        ns.run = _run_config(ns)
    except ValidationError as e:
        print(f"{parser.prog}: error: {e}", file=sys.stderr)
        return EXIT_USAGE

    try:
        code = modules[ns.command].process(ns)
    except LabelQualError as e:
        logger.error("%s", e.message)
        return e.exit_code
    except ValidationError as e:
        logger.error("invalid input: %s", e)
        return EXIT_DATA

    logger.info("%s finished with exit code %d", ns.command, code)
    return code


if __name__ == "__main__":
    sys.exit(main())
