import numpy as np
import pandas as pd
import pytest

from labelqual.concordance import (agreement_metrics, bootstrap_ci, bootstrap_panel, family_concordance, icc,
                                   icc_from_components, panel_rows, rank_correlations)
from labelqual.dataset import Dataset
from labelqual.errors import UsageError
from labelqual.models.dataset import ScaleSpec
from labelqual.models.results import AGREEMENT_METRICS, CORRELATION_METRICS, MetricName

from .conftest import crossed_rows, ratings_frame

M = MetricName


def agreement_dataset(n_teachers: int = 100, lessons: int = 50, agree: float = 0.8, seed: int = 0) -> Dataset:
    """Two humans per cell; the second copies the first with probability ``agree``, otherwise moves one category."""
    rng = np.random.default_rng(seed)
    rows = []
    for t in range(n_teachers):
        for l in range(lessons):
            for s in (1, 2):
                first = int(rng.integers(1, 4))
                second = first if rng.random() < agree else first % 3 + 1
                obs = f"T{t}-L{l}"
                rows.append(('h1', 'human', f"T{t}", 'Y1', obs, s, 'clarity', first))
                rows.append(('h2', 'human', f"T{t}", 'Y1', obs, s, 'clarity', second))
    return Dataset.from_frame(ratings_frame(rows), [ScaleSpec(item_id='clarity', categories=3)],
                              {'h1': 'human', 'h2': 'human'})


def copies_dataset() -> Dataset:
    """Three raters who always give the same score, varying across teachers and lessons."""
    raters = [('h1', 'human'), ('h2', 'human'), ('m1', 'model')]
    rows = crossed_rows([f"T{t}" for t in range(8)], raters, lessons=3, segments=2,
                        score=lambda t, l, s, r: 1 + (t + l + s) % 3)
    return Dataset.from_frame(ratings_frame(rows), [ScaleSpec(item_id='clarity', categories=3)],
                              {'h1': 'human', 'h2': 'human', 'm1': 'model'})


def test_identical_vectors_agree_perfectly():
    panel = agreement_metrics([(1, 1), (2, 2), (3, 3)], 3)
    for metric in AGREEMENT_METRICS:
        assert panel[metric].estimate == pytest.approx(1.0)

    panel = rank_correlations([(1, 1), (2, 2), (3, 3)])
    for metric in CORRELATION_METRICS:
        assert panel[metric].estimate == pytest.approx(1.0)


def test_kappa_is_zero_under_independence():
    panel = agreement_metrics(list(zip([1, 1, 2, 2], [1, 2, 1, 2])), 2)
    assert panel[M.PCT_AGREE].estimate == pytest.approx(0.5)
    assert panel[M.COHEN_KAPPA].estimate == pytest.approx(0.0, abs=1e-12)


def test_qwk_reversal():
    panel = agreement_metrics([(1, 3), (3, 1)], 3)
    assert panel[M.QWK].estimate == pytest.approx(-1.0)
    assert panel[M.PCT_AGREE].estimate == 0.0
    assert panel[M.PCT_AGREE_WITHIN1].estimate == 0.0


def test_degenerate_marginals_are_undefined_not_zero():
    panel = agreement_metrics([(2, 2)] * 5, 3)
    assert panel[M.PCT_AGREE].estimate == 1.0
    for metric in (M.COHEN_KAPPA, M.QWK):
        assert not panel[metric].defined
        assert panel[metric].estimate is None
        assert "degenerate" in panel[metric].reason


def test_empty_pairs_are_undefined():
    panel = agreement_metrics([], 3)
    assert all(not r.defined for r in panel.values())
    panel = rank_correlations([])
    assert all(not r.defined for r in panel.values())


def test_out_of_range_scores_raise():
    with pytest.raises(ValueError):
        agreement_metrics([(1, 4)], 3)


def test_rank_correlations():
    panel = rank_correlations([(1, 3), (2, 2), (3, 1)])
    for metric in CORRELATION_METRICS:
        assert panel[metric].estimate == pytest.approx(-1.0)

    panel = rank_correlations([(1, 1), (2, 3), (3, 2), (4, 4)])
    assert panel[M.SPEARMAN_RHO].estimate == pytest.approx(0.8)


def test_zero_variance_correlation_is_undefined():
    panel = rank_correlations([(1, 2), (2, 2), (3, 2)])
    assert all(r.reason == "zero variance" for r in panel.values())


def test_icc_arithmetic():
    assert icc_from_components(1.0, 1.0) == pytest.approx(0.5, abs=1e-12)
    assert icc_from_components(1.0, 1.0, 6) == pytest.approx(6 / 7, abs=1e-12)
    assert icc_from_components(0.0, 1.0) == 0.0


def test_icc_matches_balanced_anova_and_analytic_value():
    rng = np.random.default_rng(5)
    teachers, lessons = 500, 6
    values = rng.normal(0, 1, teachers)[:, None] + rng.normal(0, 1, (teachers, lessons))
    scores = [(f"T{t}", float(values[t, l])) for t in range(teachers) for l in range(lessons)]

    within = float(values.var(axis=1, ddof=1).mean())
    between = lessons * float(values.mean(axis=1).var(ddof=1))
    teacher_variance = (between - within) / lessons
    anova = teacher_variance / (teacher_variance + within)

    result = icc(scores)
    assert result.estimate == pytest.approx(anova, abs=1e-4)
    assert result.estimate == pytest.approx(0.5, abs=0.05)

    adjusted = icc(scores, 6)
    assert adjusted.metric == M.ADJ_ICC
    assert adjusted.estimate == pytest.approx(teacher_variance / (teacher_variance + within / 6), abs=1e-4)


def test_icc_with_one_teacher_is_undefined():
    result = icc([('T1', 1.0), ('T1', 2.0), ('T1', 3.0)])
    assert not result.defined
    assert "two teachers" in result.reason


def test_planted_agreement_rate_is_recovered():
    ds = agreement_dataset()
    panel = family_concordance(ds, 'human', 'clarity', seed=1)
    assert panel[M.PCT_AGREE].estimate == pytest.approx(0.8, abs=0.02)
    assert panel[M.PCT_AGREE].n_pairs == 100 * 50 * 2
    assert len(panel) == len(MetricName)


def test_missing_family_gives_undefined_panel(small_ds):
    panel = family_concordance(small_ds, 'nobody', 'clarity', seed=0)
    assert panel[M.PCT_AGREE].n_pairs == 0
    assert not panel[M.PCT_AGREE].defined


def test_identical_copies_give_degenerate_unit_intervals():
    ds = copies_dataset()
    panel = bootstrap_panel(ds, 'model', 'clarity', replicates=100, seed=4)
    for metric in AGREEMENT_METRICS + CORRELATION_METRICS:
        result = panel[metric]
        assert (result.ci_low, result.ci_high) == pytest.approx((1.0, 1.0))
        assert result.degenerate


def test_bootstrap_is_deterministic(small_ds):
    a = bootstrap_panel(small_ds, 'model', 'clarity', replicates=100, seed=9)
    b = bootstrap_panel(small_ds, 'model', 'clarity', replicates=100, seed=9)
    assert {m: (r.ci_low, r.ci_high) for m, r in a.items()} == {m: (r.ci_low, r.ci_high) for m, r in b.items()}


@pytest.mark.slow
def test_bootstrap_does_not_depend_on_worker_count(small_ds):
    serial = bootstrap_ci(small_ds, M.QWK, 'model', B=100, seed=2, item='clarity', threads=1)
    parallel = bootstrap_ci(small_ds, M.QWK, 'model', B=100, seed=2, item='clarity', threads=3)
    assert serial == parallel


def test_bootstrap_needs_enough_replicates(small_ds):
    with pytest.raises(UsageError):
        bootstrap_panel(small_ds, 'model', 'clarity', replicates=10)


def test_panel_rows(small_ds):
    rows = pd.DataFrame(panel_rows(family_concordance(small_ds, 'model', 'clarity', seed=0), 'clarity', 'model'))
    assert list(rows.columns) == ['item', 'family', 'metric', 'estimate', 'ci_low', 'ci_high', 'n', 'reason']
    assert len(rows) == len(MetricName)
    assert rows['metric'].is_monotonic_increasing


def correlated_dataset(rho: float, n: int, seed: int) -> Dataset:
    """One human and one model score per teacher, bivariate normal with correlation ``rho`` on a 21-point scale."""
    rng = np.random.default_rng(seed)
    latent = rng.multivariate_normal([11.0, 11.0], 9.0 * np.array([[1.0, rho], [rho, 1.0]]), n)
    scores = np.clip(np.rint(latent), 1, 21).astype(int)
    rows = []
    for t, (human, model) in enumerate(scores):
        rows.append(('h1', 'human', f"T{t}", 'Y1', f"T{t}-L1", 1, 'clarity', int(human)))
        rows.append(('m1', 'model', f"T{t}", 'Y1', f"T{t}-L1", 1, 'clarity', int(model)))
    return Dataset.from_frame(ratings_frame(rows), [ScaleSpec(item_id='clarity', categories=21)],
                              {'h1': 'human', 'm1': 'model'})


@pytest.mark.slow
def test_cell_bootstrap_covers_the_planted_correlation():
    hits = 0
    for seed in range(40):
        ds = correlated_dataset(0.3, 500, seed)
        result = bootstrap_panel(ds, 'model', 'clarity', replicates=1000, seed=seed, resample_cells=True,
                                 metrics=[M.PEARSON_R])[M.PEARSON_R]
        hits += result.ci_low <= 0.3 <= result.ci_high
    assert hits >= 34
