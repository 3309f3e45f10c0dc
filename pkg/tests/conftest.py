from typing import Iterable, Sequence, Tuple

import pandas as pd
import pytest

from labelqual.dataset import Dataset
from labelqual.models.dataset import RATINGS_COLUMNS, ScaleSpec, TeacherAttributes
from labelqual.models.synth import FamilySpec, GStudyPlant, SynthSpec
from labelqual.synthgen import gen_gstudy_dataset, write_bundle

Row = Tuple[str, str, str, str, str, int, str, int]


def ratings_frame(rows: Iterable[Row]) -> pd.DataFrame:
    return pd.DataFrame(list(rows), columns=list(RATINGS_COLUMNS))


def crossed_rows(teachers: Sequence[str], raters: Sequence[Tuple[str, str]], lessons: int = 2, segments: int = 1,
                 item: str = 'clarity', score=lambda t, l, s, r: 2) -> list:
    """Every rater scores every segment of every lesson of every teacher."""
    rows = []
    for t, teacher in enumerate(teachers):
        for l in range(lessons):
            for s in range(segments):
                for r, (rater, family) in enumerate(raters):
                    rows.append((rater, family, teacher, 'Y1', f"{teacher}-L{l + 1}", s + 1, item,
                                 int(score(t, l, s, r))))
    return rows


@pytest.fixture
def scale():
    return [ScaleSpec(item_id='clarity', categories=3), ScaleSpec(item_id='errors', categories=3, reverse_coded=True)]


@pytest.fixture
def roster():
    return {'h1': 'human', 'h2': 'human', 'm1': 'model'}


@pytest.fixture
def small_ds(scale, roster):
    raters = [('h1', 'human'), ('h2', 'human'), ('m1', 'model')]
    rows = crossed_rows(['T1', 'T2', 'T3'], raters, lessons=2, segments=2,
                        score=lambda t, l, s, r: 1 + (t + l + r) % 3)
    rows += crossed_rows(['T1', 'T2', 'T3'], raters, lessons=2, segments=2, item='errors',
                         score=lambda t, l, s, r: 1 + (t + s) % 3)
    attributes = TeacherAttributes(values={'T1': {'race': 'B'}, 'T2': {'race': 'W'}})
    return Dataset.from_frame(ratings_frame(rows), scale, roster, attributes)


@pytest.fixture(scope='session')
def synth_spec() -> SynthSpec:
    return SynthSpec(seed=11, teachers=30, lessons=3, segments=2, items=2, categories=5,
                     families=[FamilySpec(name='human', raters=3), FamilySpec(name='model', raters=2)],
                     gstudy=GStudyPlant(variances={'i': 1.0, 'o:i': 0.5, 's:o:i': 0.2, 'r': 0.2, 'ir': 0.1,
                                                   'residual': 0.5}))


@pytest.fixture(scope='session')
def synth_ds(synth_spec):
    ds, _ = gen_gstudy_dataset(synth_spec)
    return ds


@pytest.fixture
def synth_bundle(tmp_path, synth_spec):
    ds, oracle = gen_gstudy_dataset(synth_spec)
    paths = write_bundle(ds, oracle, tmp_path / 'data')
    return paths
