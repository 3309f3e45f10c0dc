"""
Multi-facet rating data: ingestion, validation, recoding and facet indexing.

A ``Dataset`` holds one row per observed score with its full facet coordinates
(rater, family, teacher, year, observation, segment, item). Scores are stored after
reverse-coded items have been flipped, so every downstream formula can assume
"higher is better".
"""
import hashlib
import json
import logging
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError

from .errors import (DatasetError, DuplicateFacetError, SchemaError, ScoreRangeError, UnknownReferenceError)
from .labelqual_config import settings
from .models.dataset import (ATTRIBUTES_COLUMNS, RATINGS_COLUMNS, ROSTER_COLUMNS, RatingRecord, ScaleFile, ScaleSpec,
                             TeacherAttributes)
from .parallel import derive_seed

logger = logging.getLogger(__name__)

FACETS: Tuple[str, ...] = ('rater_id', 'teacher_id', 'observation_id', 'segment_index', 'item_id')
CELL_KEYS: List[str] = ['observation_id', 'segment_index', 'item_id']
UNIQUE_KEYS: List[str] = ['rater_id', 'teacher_id', 'observation_id', 'segment_index', 'item_id']

CellKey = Tuple[str, int, str]
ReferenceMap = Dict[CellKey, str]
PathLike = Union[str, Path]


def recode_scores(scores: np.ndarray, categories: Union[int, np.ndarray]) -> np.ndarray:
    """Maps k to K + 1 - k. Applying it twice returns the input."""
    return np.asarray(categories) + 1 - np.asarray(scores)


class Dataset(object):
    records: pd.DataFrame
    scale: Dict[str, ScaleSpec]
    roster: Dict[str, str]
    attributes: TeacherAttributes
    provenance: str
    recoded: bool

    def __init__(self, records: pd.DataFrame, scale: Dict[str, ScaleSpec], roster: Dict[str, str],
                 attributes: TeacherAttributes, provenance: str, recoded: bool):
        self.records = records
        self.scale = scale
        self.roster = roster
        self.attributes = attributes
        self.provenance = provenance
        self.recoded = recoded
        self._index: Dict[str, Dict[object, np.ndarray]] = dict()

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, scale: Sequence[ScaleSpec], roster: Dict[str, str],
                   attributes: Optional[TeacherAttributes] = None, provenance: Optional[str] = None,
                   recoded: bool = False) -> 'Dataset':
        """
        Validates an in-memory ratings table and builds a Dataset.

        :param frame: one row per score, columns as in the ratings CSV
        :param scale: item definitions
        :param roster: rater_id -> family
        :param attributes: teacher attributes, if any
        :param provenance: digest of the source files; computed from the content when omitted
        :param recoded: True when reverse-coded items were already flipped
        :return: validated Dataset
        """
        missing = [c for c in RATINGS_COLUMNS if c not in frame.columns]
        if missing:
            raise SchemaError(f"ratings table is missing columns {missing}")

        records = frame.loc[:, list(RATINGS_COLUMNS)].reset_index(drop=True).copy()
        for column in ('rater_id', 'family', 'teacher_id', 'year', 'observation_id', 'item_id'):
            records[column] = records[column].astype(str)
        for column in ('segment_index', 'score'):
            records[column] = _to_int(records[column], column)
        bad_segments = np.flatnonzero(records['segment_index'].to_numpy() < 1)
        if len(bad_segments):
            row = int(bad_segments[0])
            raise SchemaError(f"row {row + 1}: segment_index {records.at[row, 'segment_index']} must be at least 1")

        scale_map = {spec.item_id: spec for spec in ScaleFile(items=list(scale)).items}
        _check_references(records, scale_map, roster)
        _check_unique(records)
        _check_nesting(records)

        categories = records['item_id'].map({k: v.category_count for k, v in scale_map.items()}).to_numpy()
        scores = records['score'].to_numpy()
        bad = np.flatnonzero((scores < 1) | (scores > categories))
        if len(bad):
            row = int(bad[0])
            item = records.at[row, 'item_id']
            raise ScoreRangeError(f"row {row + 1}: score {scores[row]} outside 1..{categories[row]} for item {item}",
                                  row=row + 1, item_id=item)

        if not recoded:
            reverse = records['item_id'].map({k: v.reverse_coded for k, v in scale_map.items()}).to_numpy(bool)
            if reverse.any():
                logger.debug("recoding %d scores on reverse-coded items", int(reverse.sum()))
                records.loc[reverse, 'score'] = recode_scores(scores[reverse], categories[reverse])

        attributes = attributes or TeacherAttributes()
        if provenance is None:
            provenance = _content_digest(records, scale_map, roster, attributes)

        return cls(records, scale_map, dict(roster), attributes, provenance, recoded=True)

    @property
    def human_family(self) -> str:
        return settings.human_family

    @property
    def families(self) -> List[str]:
        return sorted(self.records['family'].unique())

    @property
    def items(self) -> List[str]:
        return sorted(self.scale)

    @property
    def teachers(self) -> List[str]:
        return sorted(self.records['teacher_id'].unique())

    def categories(self, item_id: str) -> int:
        return self.scale[item_id].category_count

    def raters(self, family: Optional[str] = None) -> List[str]:
        if family is None:
            return sorted(self.roster)
        return sorted(r for r, f in self.roster.items() if f == family)

    def index(self, facet: str) -> Dict[object, np.ndarray]:
        if facet not in FACETS:
            raise KeyError(f"unknown facet {facet}")

        if facet not in self._index:
            self._index[facet] = {k: np.asarray(v) for k, v in self.records.groupby(facet, sort=True).indices.items()}
        return self._index[facet]

    def records_for(self, facet: str, value: object) -> pd.DataFrame:
        rows = self.index(facet).get(value)
        if rows is None:
            return self.records.iloc[0:0]
        return self.records.iloc[rows]

    def iter_records(self) -> Iterator[RatingRecord]:
        for row in self.records.itertuples(index=False):
            yield RatingRecord(**row._asdict())

    def subset(self, families: Optional[Sequence[str]] = None, items: Optional[Sequence[str]] = None,
               teachers: Optional[Sequence[str]] = None) -> 'Dataset':
        mask = np.ones(len(self.records), dtype=bool)
        if families is not None:
            mask &= self.records['family'].isin(list(families)).to_numpy()
        if items is not None:
            mask &= self.records['item_id'].isin(list(items)).to_numpy()
        if teachers is not None:
            mask &= self.records['teacher_id'].isin(list(teachers)).to_numpy()

        records = self.records.loc[mask].reset_index(drop=True)
        digest = hashlib.sha256(f"{self.provenance}:{families}:{items}:{teachers}".encode('utf-8')).hexdigest()
        return Dataset(records, self.scale, self.roster, self.attributes, digest, recoded=True)

    def with_teacher_key(self, level: str = 'teacher') -> pd.DataFrame:
        """Records with a ``teacher`` column holding teacher_id, or teacher_id:year for teacher-year grouping."""
        frame = self.records.copy()
        if level == 'teacher':
            frame['teacher'] = frame['teacher_id']
        elif level == 'teacher_year':
            frame['teacher'] = frame['teacher_id'] + ':' + frame['year']
        else:
            raise ValueError(f"unknown teacher level {level}")
        return frame

    def raw_scores(self) -> np.ndarray:
        """Scores as they appeared on input, reverse-coded items flipped back."""
        categories = self.records['item_id'].map({k: v.category_count for k, v in self.scale.items()}).to_numpy()
        reverse = self.records['item_id'].map({k: v.reverse_coded for k, v in self.scale.items()}).to_numpy(bool)
        scores = self.records['score'].to_numpy().copy()
        scores[reverse] = recode_scores(scores[reverse], categories[reverse])
        return scores

    def write(self, out_dir: PathLike) -> Dict[str, Path]:
        """Writes the standard CSV bundle (raw scores) so that ``load_dataset`` reproduces this Dataset."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {name: out / name for name in ('ratings.csv', 'scale.json', 'roster.csv', 'attributes.csv')}

        ratings = self.records.copy()
        ratings['score'] = self.raw_scores()
        ratings.to_csv(paths['ratings.csv'], index=False, lineterminator='\n')

        scale = {'items': [spec.model_dump(by_alias=True) for _, spec in sorted(self.scale.items())]}
        paths['scale.json'].write_text(json.dumps(scale, indent=2, sort_keys=True) + '\n', encoding='utf-8')

        roster = pd.DataFrame(sorted(self.roster.items()), columns=list(ROSTER_COLUMNS))
        roster.to_csv(paths['roster.csv'], index=False, lineterminator='\n')

        rows = [(t, a, v) for t, attrs in sorted(self.attributes.values.items()) for a, v in sorted(attrs.items())]
        pd.DataFrame(rows, columns=list(ATTRIBUTES_COLUMNS)).to_csv(paths['attributes.csv'], index=False,
                                                                     lineterminator='\n')
        return paths


def _to_int(column: pd.Series, name: str) -> pd.Series:
    values = pd.to_numeric(column, errors='coerce')
    bad = values.isna() | (values != np.floor(values))
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise SchemaError(f"row {row + 1}: column {name} is not a base-10 integer: {column.iloc[row]!r}")
    return values.astype(np.int64)


def _check_references(records: pd.DataFrame, scale: Dict[str, ScaleSpec], roster: Dict[str, str]) -> None:
    unknown_items = sorted(set(records['item_id']) - set(scale))
    if unknown_items:
        raise UnknownReferenceError(f"items not in scale: {unknown_items[:5]}")

    unknown_raters = sorted(set(records['rater_id']) - set(roster))
    if unknown_raters:
        raise UnknownReferenceError(f"raters not in roster: {unknown_raters[:5]}")

    mismatch = records['family'].to_numpy() != records['rater_id'].map(roster).to_numpy()
    if mismatch.any():
        row = int(np.flatnonzero(mismatch)[0])
        raise UnknownReferenceError(f"row {row + 1}: family {records.at[row, 'family']!r} disagrees with roster "
                                    f"family {roster[records.at[row, 'rater_id']]!r} of {records.at[row, 'rater_id']}")


def _check_unique(records: pd.DataFrame) -> None:
    dup = records.duplicated(UNIQUE_KEYS, keep='first').to_numpy()
    if dup.any():
        row = int(np.flatnonzero(dup)[0])
        key = tuple(records.loc[row, UNIQUE_KEYS])
        raise DuplicateFacetError(f"row {row + 1}: duplicate (rater, teacher, observation, segment, item) {key}")


def _check_nesting(records: pd.DataFrame) -> None:
    owners = records.groupby('observation_id')[['teacher_id', 'year']].nunique()
    crossed = owners[(owners['teacher_id'] > 1) | (owners['year'] > 1)]
    if len(crossed):
        raise DatasetError(f"observation {crossed.index[0]!r} belongs to more than one teacher-year")


def _content_digest(records: pd.DataFrame, scale: Dict[str, ScaleSpec], roster: Dict[str, str],
                    attributes: TeacherAttributes) -> str:
    h = hashlib.sha256()
    h.update(records.sort_values(UNIQUE_KEYS).to_csv(index=False).encode('utf-8'))
    h.update(json.dumps({k: v.model_dump() for k, v in sorted(scale.items())}, sort_keys=True).encode('utf-8'))
    h.update(json.dumps(roster, sort_keys=True).encode('utf-8'))
    h.update(json.dumps(attributes.values, sort_keys=True).encode('utf-8'))
    return h.hexdigest()


def _read_csv(path: PathLike, columns: Tuple[str, ...], what: str) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding='utf-8')
    except FileNotFoundError:
        raise DatasetError(f"{what} file not found: {path}")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise SchemaError(f"{what} file {path} does not parse: {e}")

    if tuple(frame.columns) != columns:
        raise SchemaError(f"{what} header must be exactly {','.join(columns)}; got {','.join(frame.columns)}")
    return frame


def load_scale(path: PathLike) -> List[ScaleSpec]:
    try:
        data = json.loads(Path(path).read_text(encoding='utf-8'))
    except FileNotFoundError:
        raise DatasetError(f"scale file not found: {path}")
    except json.JSONDecodeError as e:
        raise SchemaError(f"scale file {path} is not valid JSON: {e}")

    if isinstance(data, list):
        data = {'items': data}
    try:
        return ScaleFile.model_validate(data).items
    except ValidationError as e:
        raise SchemaError(f"scale file {path}: {e}")


def load_roster(path: PathLike) -> Dict[str, str]:
    frame = _read_csv(path, ROSTER_COLUMNS, 'roster')
    dup = frame['rater_id'].duplicated()
    if dup.any():
        raise SchemaError(f"roster lists rater {frame['rater_id'][dup].iloc[0]!r} twice")
    return dict(zip(frame['rater_id'], frame['family']))


def load_attributes(path: PathLike) -> TeacherAttributes:
    frame = _read_csv(path, ATTRIBUTES_COLUMNS, 'attributes')
    values: Dict[str, Dict[str, str]] = dict()
    for teacher, attribute, value in frame.itertuples(index=False):
        previous = values.setdefault(teacher, dict()).setdefault(attribute, value)
        if previous != value:
            raise SchemaError(f"teacher {teacher!r} has conflicting values for {attribute!r}")
    try:
        return TeacherAttributes(values=values)
    except ValidationError as e:
        raise SchemaError(f"attributes file {path}: {e}")


def load_dataset(ratings_path: PathLike, scale_path: PathLike, roster_path: PathLike,
                 attributes_path: Optional[PathLike] = None) -> Dataset:
    ratings = _read_csv(ratings_path, RATINGS_COLUMNS, 'ratings')
    scale = load_scale(scale_path)
    roster = load_roster(roster_path)
    attributes = load_attributes(attributes_path) if attributes_path else TeacherAttributes()

    h = hashlib.sha256()
    for path in (ratings_path, scale_path, roster_path, attributes_path):
        if path:
            h.update(Path(path).read_bytes())
    dataset = Dataset.from_frame(ratings, scale, roster, attributes, provenance=h.hexdigest())

    logger.info("loaded %d ratings: %d teachers, %d raters, %d items, families %s", len(dataset.records),
                len(dataset.teachers), len(dataset.roster), len(dataset.scale), dataset.families)
    return dataset


def _pick_one_per_group(frame: pd.DataFrame, keys: List[str], rng: np.random.Generator) -> pd.DataFrame:
    """Uniformly picks one row per group of ``keys``; ``frame`` must be sorted by keys."""
    if frame.empty:
        return frame

    group = frame.groupby(keys, sort=False).ngroup().to_numpy()
    starts = np.flatnonzero(np.r_[True, group[1:] != group[:-1]])
    sizes = np.diff(np.r_[starts, len(frame)])
    chosen = starts + np.floor(rng.random(len(starts)) * sizes).astype(np.int64)
    return frame.iloc[chosen]


def sample_reference_raters(ds: Dataset, seed: int) -> ReferenceMap:
    """
    Assigns one human rater per (observation, segment, item) cell, uniformly among the humans who scored it.
    The same map is reused for every family's comparison.
    """
    records = ds.records
    humans = records.loc[records['family'] == ds.human_family, CELL_KEYS + ['rater_id']]
    humans = humans.drop_duplicates().sort_values(CELL_KEYS + ['rater_id'], kind='mergesort')

    rng = np.random.default_rng(derive_seed(seed, 'reference'))
    chosen = _pick_one_per_group(humans, CELL_KEYS, rng)

    omitted = records[CELL_KEYS].drop_duplicates().shape[0] - len(chosen)
    if omitted:
        logger.warning("%d cells have no human rating and were omitted from the reference map", omitted)

    return {(o, int(s), j): r for o, s, j, r in chosen.itertuples(index=False)}


def reference_frame(reference: ReferenceMap) -> pd.DataFrame:
    rows = [(o, s, j, r) for (o, s, j), r in reference.items()]
    frame = pd.DataFrame(rows, columns=CELL_KEYS + ['ref_rater'])
    frame['segment_index'] = frame['segment_index'].astype(np.int64)
    return frame


def paired_frame(ds: Dataset, reference: ReferenceMap, target_family: str, item: Optional[str] = None,
                 seed: int = 0, target_rater: Optional[str] = None) -> pd.DataFrame:
    """
    Pairs each reference human score with one target score from the same cell.

    The target is a uniformly drawn member of ``target_family`` (or ``target_rater`` when given), never the
    reference rater itself. Returns columns teacher_id, observation_id, segment_index, item_id, ref_score,
    target_score sorted by cell.
    """
    columns = ['teacher_id', 'observation_id', 'segment_index', 'item_id', 'ref_score', 'target_score']
    ref = reference_frame(reference)
    if item is not None:
        ref = ref.loc[ref['item_id'] == item]
    if ref.empty:
        return pd.DataFrame(columns=columns)

    records = ds.records
    scored = ref.merge(records[CELL_KEYS + ['rater_id', 'teacher_id', 'score']],
                       left_on=CELL_KEYS + ['ref_rater'], right_on=CELL_KEYS + ['rater_id'], how='inner')
    scored = scored.rename(columns={'score': 'ref_score'}).drop(columns=['rater_id'])

    if target_rater is not None:
        candidates = records.loc[records['rater_id'] == target_rater]
    else:
        candidates = records.loc[records['family'] == target_family]
    candidates = candidates[CELL_KEYS + ['rater_id', 'score']].rename(columns={'score': 'target_score'})

    joined = scored.merge(candidates, on=CELL_KEYS, how='inner')
    joined = joined.loc[joined['rater_id'] != joined['ref_rater']]
    joined = joined.sort_values(CELL_KEYS + ['rater_id'], kind='mergesort')

    rng = np.random.default_rng(derive_seed(seed, 'target', target_family, target_rater))
    chosen = _pick_one_per_group(joined, CELL_KEYS, rng)
    return chosen.loc[:, columns].reset_index(drop=True)


def paired_scores(ds: Dataset, reference: ReferenceMap, target_family: str, item: Optional[str] = None,
                  seed: int = 0, target_rater: Optional[str] = None) -> List[Tuple[int, int]]:
    frame = paired_frame(ds, reference, target_family, item, seed, target_rater)
    return [(int(a), int(b)) for a, b in zip(frame['ref_score'], frame['target_score'])]


def score_distributions(ds: Dataset) -> pd.DataFrame:
    counts = ds.records.groupby(['item_id', 'family', 'score']).size().rename('count').reset_index()
    totals = counts.groupby(['item_id', 'family'])['count'].transform('sum')
    counts['share'] = counts['count'] / totals
    return counts.sort_values(['item_id', 'family', 'score']).reset_index(drop=True)


def teacher_levels(ds: Dataset, attribute: str) -> Dict[str, str]:
    levels = dict()
    excluded = 0
    for teacher in ds.teachers:
        level = ds.attributes.level(teacher, attribute)
        if level is None:
            excluded += 1
        else:
            levels[teacher] = level

    if excluded:
        logger.warning("%d teachers lack attribute %r and are excluded from the fairness analysis",
                       excluded, attribute)
    return levels
