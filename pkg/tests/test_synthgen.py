import json
import logging

import numpy as np
import pydantic
import pytest

from labelqual.dataset import load_dataset
from labelqual.errors import SchemaError, UsageError
from labelqual.models.synth import Assignment, FamilySpec, GStudyPlant, HrmPlant, SynthMode, SynthSpec
from labelqual.synthgen import (DISCRETIZATION_VARIANCE, gen_gstudy_dataset, gen_hrm_dataset, generate,
                                load_synth_spec, write_bundle)

NO_VARIANCE = {'i': 0.0, 'o:i': 0.0, 's:o:i': 0.0, 'r': 0.0, 'ir': 0.0, 'residual': 0.0}


def hrm_spec(**plant) -> SynthSpec:
    return SynthSpec(mode=SynthMode.HRM, seed=4, teachers=30, lessons=2, segments=2, items=2, categories=5,
                     families=[FamilySpec(name='human', raters=4)], hrm=HrmPlant(**plant))


def test_no_variance_gives_the_rounded_mean():
    spec = SynthSpec(seed=1, teachers=5, categories=5, gstudy=GStudyPlant(mean=3.2, variances=NO_VARIANCE))
    ds, oracle = gen_gstudy_dataset(spec)
    assert set(ds.records['score']) == {3}
    assert oracle['clamped_fraction'] == 0.0


def test_oracle_reliabilities():
    plant = GStudyPlant(variances={'i': 2.0, 'o:i': 1.0, 's:o:i': 1.0, 'r': 2.0, 'ir': 1.0, 'residual': 1.0})
    _, oracle = gen_gstudy_dataset(SynthSpec(seed=2, teachers=5, gstudy=plant))
    planted = oracle['families']['human']['planted']
    assert planted['erho2_rxsoi'] == pytest.approx(1 / 3)
    assert planted['phi_rxsoi'] == pytest.approx(0.25)

    observed = oracle['families']['human']['observed_components']
    assert observed['residual'] == pytest.approx(1.0 + DISCRETIZATION_VARIANCE)


def test_rxoi_oracle_folds_segments_into_the_residual():
    plant = GStudyPlant(variances={'i': 2.0, 'o:i': 1.0, 'r': 2.0, 'ir': 1.0, 'residual': 1.0})
    _, oracle = gen_gstudy_dataset(SynthSpec(seed=2, teachers=5, segments=1, gstudy=plant))
    planted = oracle['families']['human']['planted']
    assert planted['erho2_rxoi'] == pytest.approx(0.4)
    assert planted['phi_rxoi'] == pytest.approx(2 / 7)


def test_generation_is_deterministic(synth_spec):
    a, oracle_a = gen_gstudy_dataset(synth_spec)
    b, oracle_b = gen_gstudy_dataset(synth_spec)
    assert a.records.equals(b.records)
    assert a.provenance == b.provenance
    assert json.dumps(oracle_a, sort_keys=True) == json.dumps(oracle_b, sort_keys=True)

    other, _ = gen_gstudy_dataset(synth_spec.model_copy(update={'seed': 12}))
    assert other.provenance != a.provenance


def test_dataset_shape(synth_ds, synth_spec):
    assert synth_ds.families == ['human', 'model']
    assert synth_ds.items == ['item01', 'item02']
    assert len(synth_ds.teachers) == synth_spec.teachers
    assert len(synth_ds.records) == 30 * 3 * 2 * 2 * (3 + 2)
    assert synth_ds.raters('model') == ['model-01', 'model-02']


def test_family_weights_enter_the_oracle():
    families = [FamilySpec(name='human', raters=2), FamilySpec(name='model', raters=2, teacher_weight=0.0)]
    _, oracle = gen_gstudy_dataset(SynthSpec(seed=3, teachers=5, families=families))
    assert oracle['families']['model']['components']['i'] == 0.0
    assert oracle['families']['model']['planted']['erho2_rxsoi'] == 0.0
    assert oracle['pairs'] == [{'family_a': 'human', 'family_b': 'model', 'cross_lesson_corr': 0.0,
                                'disattenuated': None}]


def test_sparse_assignment_gives_each_lesson_a_fixed_number_of_raters():
    spec = SynthSpec(seed=5, teachers=10, lessons=3, segments=1, assignment=Assignment.SPARSE, raters_per_cell=2,
                     families=[FamilySpec(name='human', raters=5)])
    ds, _ = gen_gstudy_dataset(spec)
    per_lesson = ds.records.groupby('observation_id')['rater_id'].nunique()
    assert (per_lesson == 2).all()
    assert len(per_lesson) == 30


def test_heavy_clamping_warns(caplog):
    plant = GStudyPlant(mean=1.0, variances={'i': 0.0, 'o:i': 0.0, 'r': 0.0, 'ir': 0.0, 'residual': 400.0})
    with caplog.at_level(logging.WARNING):
        _, oracle = gen_gstudy_dataset(SynthSpec(seed=6, teachers=10, categories=2, gstudy=plant))
    assert oracle['clamped_fraction'] > 0.8
    assert "clamped" in caplog.text


def test_spec_validation():
    with pytest.raises(pydantic.ValidationError):
        SynthSpec(families=[FamilySpec(name='a'), FamilySpec(name='a')])
    with pytest.raises(pydantic.ValidationError):
        SynthSpec(assignment=Assignment.SPARSE, raters_per_cell=3, families=[FamilySpec(name='human', raters=2)])
    with pytest.raises(pydantic.ValidationError):
        GStudyPlant(variances={'i': -1.0})
    with pytest.raises(pydantic.ValidationError):
        FamilySpec(name='m', variances={'i': 1.0})
    with pytest.raises(pydantic.ValidationError):
        HrmPlant(attribute_levels={'B': 0.5, 'W': 0.4})
    with pytest.raises(pydantic.ValidationError):
        HrmPlant(psi2={'human-01': 0.0})


def test_load_synth_spec(tmp_path):
    path = tmp_path / 'spec.json'
    path.write_text(json.dumps({'mode': 'hrm', 'seed': 9, 'teachers': 12}))
    spec = load_synth_spec(path)
    assert spec.mode == SynthMode.HRM
    assert spec.teachers == 12

    path.write_text('{"teachers": 1}')
    with pytest.raises(SchemaError):
        load_synth_spec(path)
    with pytest.raises(SchemaError, match="not found"):
        load_synth_spec(tmp_path / 'missing.json')


def test_mode_mismatch():
    with pytest.raises(UsageError):
        gen_gstudy_dataset(SynthSpec(mode=SynthMode.HRM))
    with pytest.raises(UsageError):
        gen_hrm_dataset(SynthSpec(mode=SynthMode.GSTUDY))


def test_perfect_raters_reproduce_ideal_scores():
    ds, _, oracle = gen_hrm_dataset(hrm_spec(default_psi2=1e-12))
    ideal = {(x['observation_id'], x['item_id']): x['xi'] for x in oracle['xi']}
    scored = [ideal[(o, j)] for o, j in zip(ds.records['observation_id'], ds.records['item_id'])]
    assert (ds.records['score'].to_numpy() == np.array(scored)).all()


def test_lenient_rater_scores_higher():
    ds, _, _ = gen_hrm_dataset(hrm_spec(phi={'human-02': 0.8}))
    means = ds.records.groupby('rater_id')['score'].mean()
    assert means['human-02'] > means.drop('human-02').max()


def test_fairness_offset_lowers_scores_for_one_group():
    levels = {'B': 0.5, 'W': 0.5}
    ds, attributes, oracle = gen_hrm_dataset(hrm_spec(default_psi2=0.3, delta={'human-01': {'B': -0.6}},
                                                      attribute_levels=levels))
    ideal = {(x['observation_id'], x['item_id']): x['xi'] for x in oracle['xi']}
    records = ds.records.copy()
    records['gap'] = records['score'] - [ideal[k] for k in zip(records['observation_id'], records['item_id'])]
    records['level'] = records['teacher_id'].map(oracle['levels'])

    gaps = records.groupby(['rater_id', 'level'])['gap'].mean()
    assert gaps[('human-01', 'B')] - gaps[('human-01', 'W')] < -0.3
    assert attributes.level('T001', 'race') == oracle['levels']['T001']


def test_unknown_planted_rater():
    with pytest.raises(UsageError, match="unknown rater"):
        gen_hrm_dataset(hrm_spec(phi={'ghost': 1.0}))


def test_every_dimension_needs_an_item():
    with pytest.raises(UsageError):
        gen_hrm_dataset(hrm_spec(dimensions=2, item_dimensions=[1, 1]))


def test_hrm_oracle_contents():
    ds, _, oracle = gen_hrm_dataset(hrm_spec(dimensions=2))
    assert oracle['dimensions'] == {'item01': 1, 'item02': 2}
    assert len(oracle['Theta']) == 30
    assert len(oracle['Theta']['T001']) == 2
    assert len(oracle['xi']) == 30 * 2 * 2
    assert ds.scale['item02'].dimension == 2


def test_bundle_round_trip(tmp_path, synth_spec):
    ds, oracle = generate(synth_spec)
    paths = write_bundle(ds, oracle, tmp_path)
    assert json.loads(paths['oracle.json'].read_text())['seed'] == synth_spec.seed

    loaded = load_dataset(paths['ratings.csv'], paths['scale.json'], paths['roster.csv'])
    key = ['rater_id', 'observation_id', 'segment_index', 'item_id']
    assert loaded.records.sort_values(key).reset_index(drop=True).equals(
        ds.records.sort_values(key).reset_index(drop=True))
    assert loaded.provenance == load_dataset(paths['ratings.csv'], paths['scale.json'], paths['roster.csv']).provenance
