import logging
from argparse import ArgumentParser, Namespace

from ..errors import EXIT_OK
from ..models.synth import SynthMode, SynthSpec
from ..parser_module import ParserModule
from ..synthgen import generate, load_synth_spec, write_bundle
from ._common import run_config

logger = logging.getLogger(__name__)


class Parser(ParserModule):
    parser: ArgumentParser

    def init(self, parser: ArgumentParser):
        self.parser = parser
        parser.description = "generate a synthetic ratings bundle with an oracle of the planted parameters"
        parser.add_argument('--mode', type=SynthMode, choices=list(SynthMode), default=None)
        parser.add_argument('--spec', type=str, default=None, help="synthetic spec JSON")

    def parser_name(self) -> str:
        return 'synth'

    def process(self, ns: Namespace) -> int:
        run = run_config(ns)
        spec = load_synth_spec(ns.spec) if ns.spec else SynthSpec()
        # a seed in the spec file wins unless --seed is given
        update = {'seed': run.seed} if ns.seed is not None or not ns.spec else dict()
        if ns.mode is not None:
            update['mode'] = ns.mode
        spec = SynthSpec.model_validate(dict(spec.model_dump(), **update))

        ds, oracle = generate(spec)
        paths = write_bundle(ds, oracle, run.out)
        logger.info("synthetic %s bundle written: %s", spec.mode.value, ', '.join(sorted(paths)))
        return EXIT_OK
