import numpy as np
import pytest

from labelqual.dataset import Dataset
from labelqual.errors import DatasetError, InestimableTermError, UsageError
from labelqual.gtheory import (check_estimable, dependability, fit_reml, fit_variance_components, generalizability,
                               gstudy, item_score_reliability)
from labelqual.models.dataset import ScaleSpec
from labelqual.models.results import RESIDUAL, VarianceComponents, VarianceDesign
from labelqual.models.synth import FamilySpec, GStudyPlant, SynthSpec
from labelqual.synthgen import DISCRETIZATION_VARIANCE, gen_gstudy_dataset

from .conftest import crossed_rows, ratings_frame

HUMANS = [('h1', 'human'), ('h2', 'human')]


def components(**values) -> VarianceComponents:
    return VarianceComponents(components={k.replace('_', ':'): v for k, v in values.items()}, grand_mean=0.0, n_obs=0)


def test_constant_scores_give_zero_components(scale, roster):
    rows = crossed_rows(['T1', 'T2', 'T3'], HUMANS, lessons=2, segments=2, score=lambda t, l, s, r: 3)
    ds = Dataset.from_frame(ratings_frame(rows), scale, roster)
    result = gstudy(ds, VarianceDesign.RxSOI, 'human', 'clarity')
    assert all(v == 0.0 for v in result.components.components.values())
    assert result.erho2 == 0.0
    assert result.phi == 0.0
    assert result.degenerate


def test_single_rater_makes_the_rater_term_inestimable(scale, roster):
    rows = crossed_rows(['T1', 'T2', 'T3'], [('h1', 'human')], lessons=2, segments=2,
                        score=lambda t, l, s, r: 1 + (t + l) % 3)
    ds = Dataset.from_frame(ratings_frame(rows), scale, roster)
    with pytest.raises(InestimableTermError) as info:
        fit_variance_components(ds, VarianceDesign.RxOI, 'human', 'clarity')
    assert info.value.term == 'r'
    assert "inestimable term 'r'" in info.value.message


def test_folding_drops_the_rater_terms_of_a_single_rater(scale, roster):
    rows = crossed_rows(['T1', 'T2', 'T3', 'T4'], [('h1', 'human')], lessons=2, segments=2,
                        score=lambda t, l, s, r: 1 + (t + l + s) % 3)
    ds = Dataset.from_frame(ratings_frame(rows), scale, roster)
    vc = fit_variance_components(ds, VarianceDesign.RxSOI, 'human', 'clarity', fold=True)
    assert vc.folded == ['s:o:i', 'r', 'ir']
    assert set(vc.components) == set(VarianceDesign.RxSOI.terms) | {RESIDUAL}
    assert vc['r'] == vc['ir'] == vc['s:o:i'] == 0.0


def test_folding_never_drops_the_teacher_term(scale, roster):
    rows = crossed_rows(['T1'], HUMANS, lessons=2, segments=2, score=lambda t, l, s, r: 1 + (l + s + r) % 3)
    ds = Dataset.from_frame(ratings_frame(rows), scale, roster)
    with pytest.raises(InestimableTermError) as info:
        fit_variance_components(ds, VarianceDesign.RxSOI, 'human', 'clarity', fold=True)
    assert info.value.term == 'i'


def test_folding_a_single_segment_matches_the_lesson_design(synth_spec):
    ds, _ = gen_gstudy_dataset(synth_spec.model_copy(update={'segments': 1}))
    with pytest.raises(InestimableTermError):
        gstudy(ds, VarianceDesign.RxSOI, 'human', 'item01')
    folded = gstudy(ds, VarianceDesign.RxSOI, 'human', 'item01', fold=True)
    assert folded.components.folded == ['s:o:i']
    assert folded.erho2 == pytest.approx(gstudy(ds, VarianceDesign.RxOI, 'human', 'item01').erho2, rel=1e-6)


def test_confounded_terms_are_inestimable():
    teacher = np.array([0, 0, 1, 1, 2, 2])
    with pytest.raises(InestimableTermError, match="coincide"):
        check_estimable({'i': teacher, 'ir': teacher * 10, 'r': np.array([0, 1] * 3)}, 6)
    with pytest.raises(InestimableTermError, match="own level"):
        check_estimable({'r': np.arange(6)}, 6)


def test_per_item_designs_need_an_item(small_ds):
    with pytest.raises(UsageError):
        fit_variance_components(small_ds, VarianceDesign.RxOI, 'human')
    with pytest.raises(DatasetError):
        fit_variance_components(small_ds, VarianceDesign.RxOI, 'nobody', 'clarity')


def test_reliability_arithmetic():
    crossed = components(i=2.0, o_i=1.0, r=2.0, ir=1.0, residual=1.0)
    assert generalizability(crossed, VarianceDesign.RxOI) == pytest.approx(0.4)
    assert dependability(crossed, VarianceDesign.RxOI) == pytest.approx(2 / 7)

    nested = components(i=2.0, o_i=1.0, s_o_i=1.0, r=2.0, ir=1.0, residual=1.0)
    assert generalizability(nested, VarianceDesign.RxSOI) == pytest.approx(1 / 3)
    assert dependability(nested, VarianceDesign.RxSOI) == pytest.approx(0.25)


def test_no_teacher_variance_means_no_reliability():
    vc = components(i=0.0, o_i=1.0, r=2.0, ir=1.0, residual=1.0)
    assert generalizability(vc, VarianceDesign.RxOI) == 0.0
    assert dependability(vc, VarianceDesign.RxOI) == 0.0


def test_no_rater_main_effect_makes_dependability_equal_generalizability():
    vc = components(i=2.0, o_i=1.0, r=0.0, ir=1.0, residual=1.0)
    assert dependability(vc, VarianceDesign.RxOI) == pytest.approx(generalizability(vc, VarianceDesign.RxOI))


@pytest.mark.parametrize('r', [0.0, 0.5, 3.0])
def test_dependability_never_exceeds_generalizability(r):
    vc = components(i=1.5, o_i=0.7, s_o_i=0.2, r=r, ir=0.4, residual=1.1)
    assert dependability(vc, VarianceDesign.RxSOI) <= generalizability(vc, VarianceDesign.RxSOI)


def test_gstudy_on_synthetic_data(synth_ds):
    result = gstudy(synth_ds, VarianceDesign.RxSOI, 'human', 'item01')
    assert set(result.components.components) == {'i', 'o:i', 's:o:i', 'r', 'ir', RESIDUAL}
    assert result.components.n_obs == 30 * 3 * 2 * 3
    assert 0.0 <= result.phi <= result.erho2 <= 1.0
    assert result.item == 'item01'


def test_teacher_year_grouping_matches_single_year_data(synth_ds):
    by_teacher = fit_variance_components(synth_ds, VarianceDesign.RxOI, 'model', 'item02')
    by_year = fit_variance_components(synth_ds, VarianceDesign.RxOI, 'model', 'item02', teacher_level='teacher_year')
    assert by_year.components == pytest.approx(by_teacher.components)


def test_fit_reml_recovers_one_way_anova():
    rng = np.random.default_rng(3)
    groups, per_group = 80, 5
    y = np.repeat(rng.normal(0, 1.0, groups), per_group) + rng.normal(0, 0.5, groups * per_group)
    codes = np.repeat(np.arange(groups), per_group)
    fit = fit_reml(y, {'g': codes})

    table = y.reshape(groups, per_group)
    within = float(table.var(axis=1, ddof=1).mean())
    between = (per_group * float(table.mean(axis=1).var(ddof=1)) - within) / per_group
    assert fit.converged
    assert fit.components[RESIDUAL] == pytest.approx(within, rel=1e-3)
    assert fit.components['g'] == pytest.approx(between, rel=1e-3)
    assert fit.grand_mean == pytest.approx(y.mean())


def _three_items(second) -> Dataset:
    rng = np.random.default_rng(8)
    rows = []
    for t in range(200):
        a = int(rng.integers(1, 6))
        values = {'a': a, 'b': second(a, rng), 'c': int(rng.integers(1, 6))}
        for item, score in values.items():
            rows.append(('h1', 'human', f"T{t}", 'Y1', f"T{t}-L1", 1, item, score))
    scale = [ScaleSpec(item_id=j, categories=5) for j in 'abc']
    return Dataset.from_frame(ratings_frame(rows), scale, {'h1': 'human'})


def test_item_score_reliability():
    duplicate = _three_items(lambda a, rng: a)
    assert item_score_reliability(duplicate, 'b') == pytest.approx(1.0)

    independent = _three_items(lambda a, rng: int(rng.integers(1, 6)))
    assert item_score_reliability(independent, 'c') < 0.1


def test_item_score_reliability_needs_three_items(small_ds):
    with pytest.raises(DatasetError, match="three items"):
        item_score_reliability(small_ds, 'clarity')


@pytest.mark.slow
def test_planted_components_are_recovered():
    plant = GStudyPlant(variances={'i': 2.0, 'o:i': 1.0, 'r': 2.0, 'ir': 1.0, RESIDUAL: 1.0})
    # relative windows sit near 2.5 standard errors of each term at 200 x 4 x 4
    windows = {'i': 0.35, 'o:i': 0.25, 'ir': 0.25, RESIDUAL: 0.10}
    passed, rater_terms, phis = 0, [], []
    for seed in range(20):
        spec = SynthSpec(seed=seed, teachers=200, lessons=4, segments=1, items=1, categories=21,
                         families=[FamilySpec(name='human', raters=4)], gstudy=plant)
        ds, oracle = gen_gstudy_dataset(spec)
        truth = oracle['families']['human']
        result = gstudy(ds, VarianceDesign.RxOI, 'human', 'item01')
        vc = result.components

        within = all(abs(vc[t] - truth['observed_components'][t]) <= w * truth['observed_components'][t]
                     for t, w in windows.items())
        passed += within and abs(result.erho2 - truth['observed']['erho2_rxoi']) <= 0.08
        rater_terms.append(vc['r'])
        phis.append(result.phi)
        assert result.phi <= result.erho2

    assert passed >= 18
    # four raters leave the rater main effect with three degrees of freedom per seed
    assert np.mean(rater_terms) == pytest.approx(2.0, rel=0.45)
    assert np.mean(phis) == pytest.approx(truth['observed']['phi_rxoi'], abs=0.08)
    assert truth['observed_components'][RESIDUAL] == pytest.approx(1.0 + DISCRETIZATION_VARIANCE)
    assert truth['planted']['erho2_rxoi'] == pytest.approx(0.4)
    assert truth['planted']['phi_rxoi'] == pytest.approx(2 / 7)


@pytest.mark.slow
def test_crossed_item_design_fits_all_items(synth_ds):
    result = gstudy(synth_ds, VarianceDesign.JxRxSOI, 'human')
    assert result.item is None
    assert set(result.components.components) == set(VarianceDesign.JxRxSOI.terms) | {RESIDUAL}
    assert result.components.n_obs == 30 * 3 * 2 * 3 * 2
