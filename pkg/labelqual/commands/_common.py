import logging
from argparse import ArgumentParser, Namespace
from typing import List, Optional, Sequence

from ..dataset import Dataset, load_dataset
from ..errors import UsageError
from ..labelqual_config import RunConfig

logger = logging.getLogger(__name__)


def run_config(ns: Namespace) -> RunConfig:
    return ns.run


def dataset(run: RunConfig) -> Dataset:
    if not run.has_dataset:
        raise UsageError(f"{run.command} needs --ratings, --scale and --roster")
    return load_dataset(run.ratings, run.scale, run.roster, run.attributes)


def add_selection(parser: ArgumentParser, families: bool = True) -> None:
    parser.add_argument('--items', '--item', nargs='+', default=None,
                        help="items to analyze, space or comma separated (default: all)")
    if families:
        parser.add_argument('--families', '--family', nargs='+', default=None,
                            help="rater families, space or comma separated (default: all)")


def split_names(values: Optional[Sequence[str]]) -> List[str]:
    """``['a,b', 'c']`` -> ``['a', 'b', 'c']``"""
    return [name for value in values or [] for name in value.split(',') if name]


def pick(requested: Optional[Sequence[str]], known: Sequence[str], what: str) -> List[str]:
    requested = split_names(requested)
    if not requested:
        return list(known)
    unknown = [x for x in requested if x not in known]
    if unknown:
        raise UsageError(f"unknown {what} {unknown}; known: {list(known)}")
    return list(dict.fromkeys(requested))


def other_families(ds: Dataset, requested: Optional[Sequence[str]]) -> List[str]:
    return [f for f in pick(requested, ds.families, 'families') if f != ds.human_family]


def rates_item(ds: Dataset, family: str, item: str) -> bool:
    records = ds.records
    return bool(((records['family'] == family) & (records['item_id'] == item)).any())


def missing_note(ds: Dataset, item: str, families: Sequence[str]) -> Optional[str]:
    """Why (item, families) cannot be analyzed, or None when every family rated the item."""
    absent = [f for f in families if f is not None and not rates_item(ds, f, item)]
    if not absent:
        return None
    note = f"no ratings for {', '.join(absent)} on item {item}"
    logger.warning("%s; skipped", note)
    return note
