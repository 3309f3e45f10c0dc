import json
import logging

import pandas as pd
import pytest

from labelqual.__main__ import main
from labelqual.commands import build_parser
from labelqual.dataset import Dataset
from labelqual.errors import EXIT_DATA, EXIT_NONCONVERGED, EXIT_OK, EXIT_USAGE
from labelqual.models.results import MetricName
from labelqual.report import PANELS

from .conftest import crossed_rows, ratings_frame

HRM_SPEC = {
    'mode': 'hrm', 'teachers': 12, 'lessons': 2, 'segments': 2, 'items': 1, 'categories': 5,
    'families': [{'name': 'human', 'raters': 3}, {'name': 'model', 'raters': 2}],
    'hrm': {'phi': {'model-01': 0.5}, 'attribute_levels': {'B': 0.5, 'W': 0.5}},
}


def bundle_flags(paths) -> list:
    return ['--ratings', str(paths['ratings.csv']), '--scale', str(paths['scale.json']),
            '--roster', str(paths['roster.csv']), '--attributes', str(paths['attributes.csv'])]


def test_version_and_help():
    assert main(['--version']) == EXIT_OK
    assert main(['--help']) == EXIT_OK
    assert main(['gstudy', '--help']) == EXIT_OK


def test_usage_errors(capsys):
    assert main([]) == EXIT_USAGE
    assert main(['validate', '--bogus']) == EXIT_USAGE
    assert "unrecognized arguments" in capsys.readouterr().err
    assert main(['nonsense']) == EXIT_USAGE
    assert main(['validate', '--alpha', '1.5']) == EXIT_USAGE


def test_missing_bundle_is_a_usage_error(tmp_path):
    assert main(['validate', '--out', str(tmp_path)]) == EXIT_USAGE


def test_validate(tmp_path, small_ds):
    paths = small_ds.write(tmp_path / 'data')
    out = tmp_path / 'out'
    assert main(['validate'] + bundle_flags(paths) + ['--out', str(out)]) == EXIT_OK
    meta = json.loads((out / 'distributions.meta.json').read_text())
    assert meta['flags']['families'] == ['human', 'model']
    assert (out / 'distributions.csv').exists()


def test_bad_scores_exit_with_a_data_error(tmp_path, small_ds, caplog):
    paths = small_ds.write(tmp_path)
    text = paths['ratings.csv'].read_text().splitlines()
    header, first = text[0], text[1].rsplit(',', 1)[0]
    paths['ratings.csv'].write_text('\n'.join([header, first + ',9'] + text[2:]) + '\n')
    with caplog.at_level(logging.ERROR):
        assert main(['validate'] + bundle_flags(paths)) == EXIT_DATA
    assert "row 1" in caplog.text


def test_inestimable_term_exits_with_a_data_error(tmp_path, scale, roster, caplog):
    rows = crossed_rows(['T1', 'T2', 'T3'], [('h1', 'human')], lessons=2, segments=2,
                        score=lambda t, l, s, r: 1 + (t + l + s) % 3)
    paths = Dataset.from_frame(ratings_frame(rows), scale, roster).write(tmp_path / 'data')
    with caplog.at_level(logging.ERROR):
        code = main(['gstudy', '--design', 'rxoi'] + bundle_flags(paths) + ['--out', str(tmp_path / 'out')])
    assert code == EXIT_DATA
    assert "inestimable term 'r'" in caplog.text


def test_unknown_item_selection(synth_bundle, tmp_path):
    assert main(['concordance', '--items', 'nope', '--no-bootstrap'] + bundle_flags(synth_bundle) +
                ['--out', str(tmp_path)]) == EXIT_USAGE


def test_synth_seed_precedence(tmp_path):
    spec = tmp_path / 'spec.json'
    spec.write_text(json.dumps({'seed': 17, 'teachers': 4}))
    assert main(['synth', '--spec', str(spec), '--out', str(tmp_path / 'a')]) == EXIT_OK
    assert json.loads((tmp_path / 'a' / 'oracle.json').read_text())['seed'] == 17

    assert main(['synth', '--spec', str(spec), '--seed', '3', '--out', str(tmp_path / 'b')]) == EXIT_OK
    assert json.loads((tmp_path / 'b' / 'oracle.json').read_text())['seed'] == 3


def test_concordance_is_reproducible_from_the_seed(synth_bundle, tmp_path):
    args = ['concordance', '-B', '100', '--seed', '4', '--items', 'item01', '--families', 'model']
    args += bundle_flags(synth_bundle)
    assert main(args + ['--out', str(tmp_path / 'a')]) == EXIT_OK
    assert main(args + ['--out', str(tmp_path / 'b')]) == EXIT_OK
    assert (tmp_path / 'a' / 'concordance.csv').read_bytes() == (tmp_path / 'b' / 'concordance.csv').read_bytes()


@pytest.mark.slow
def test_concordance_does_not_depend_on_threads(synth_bundle, tmp_path):
    args = ['concordance', '-B', '100', '--seed', '4', '--items', 'item01'] + bundle_flags(synth_bundle)
    assert main(args + ['--threads', '1', '--out', str(tmp_path / 'a')]) == EXIT_OK
    assert main(args + ['--threads', '3', '--out', str(tmp_path / 'b')]) == EXIT_OK
    assert (tmp_path / 'a' / 'concordance.csv').read_bytes() == (tmp_path / 'b' / 'concordance.csv').read_bytes()


@pytest.mark.slow
def test_full_pipeline_produces_every_panel(tmp_path):
    spec = tmp_path / 'spec.json'
    spec.write_text(json.dumps(HRM_SPEC))
    data, results, report = tmp_path / 'data', tmp_path / 'results', tmp_path / 'report'
    assert main(['synth', '--spec', str(spec), '--seed', '2', '--out', str(data)]) == EXIT_OK

    paths = {name: data / name for name in ('ratings.csv', 'scale.json', 'roster.csv', 'attributes.csv')}
    common = bundle_flags(paths) + ['--seed', '2', '--out', str(results)]
    assert main(['validate'] + common) == EXIT_OK
    assert main(['concordance', '-B', '100'] + common) == EXIT_OK
    assert main(['gstudy'] + common) in (EXIT_OK, EXIT_NONCONVERGED)
    assert main(['disattenuate', '-B', '500'] + common) == EXIT_OK
    assert main(['dstudy', '--model-family', 'model', '--baseline-obs', '4'] + common) in (EXIT_OK,
                                                                                           EXIT_NONCONVERGED)
    assert main(['hrm', 'fit', '--chains', '2', '--iterations', '120', '--burn-in', '60',
                 '--covariate', 'race'] + common) in (EXIT_OK, EXIT_NONCONVERGED)
    assert (results / 'hrm_human.npz').exists()
    assert (results / 'hrm_models.npz').exists()

    assert main(['report', '--in', str(results), '--out', str(report)]) == EXIT_OK
    manifest = json.loads((report / 'manifest.json').read_text())
    assert sorted(manifest['panels']) == sorted(PANELS)
    assert manifest['absent'] == []
    assert (report / 'verdicts.csv').exists()

    again = tmp_path / 'again'
    assert main(['report', '--in', str(results), '--out', str(again)]) == EXIT_OK
    assert (again / 'manifest.json').read_bytes() == (report / 'manifest.json').read_bytes()

    assert main(['hrm', 'summarize', '--draws', str(results / 'hrm_human.npz'),
                 '--out', str(tmp_path / 'summary')]) in (EXIT_OK, EXIT_NONCONVERGED)
    assert (tmp_path / 'summary' / 'hrm.csv').exists()


def test_spec_flag_names_are_accepted():
    parser, _ = build_parser()
    ns = parser.parse_args(['hrm', 'fit', '--iters', '300', '--burnin', '100', '--family', 'human'])
    assert (ns.iterations, ns.burn_in, ns.families) == (300, 100, ['human'])
    ns = parser.parse_args(['dstudy', '--item', 'item01', '--scenario', 'hil', 'human'])
    assert (ns.items, ns.scenarios) == (['item01'], ['hil', 'human'])
    ns = parser.parse_args(['disattenuate', '--families', 'human,model', '--bootstrap', '600'])
    assert (ns.families, ns.replicates) == (['human,model'], 600)
    ns = parser.parse_args(['gstudy', '--family', 'model'])
    assert ns.families == ['model']


def test_concordance_metric_filter(synth_bundle, tmp_path):
    args = ['concordance', '--family', 'model', '--item', 'item01', '--metric', 'qwk,pearson_r',
            '--bootstrap', '100', '--seed', '4'] + bundle_flags(synth_bundle)
    assert main(args + ['--out', str(tmp_path)]) == EXIT_OK
    frame = pd.read_csv(tmp_path / 'concordance.csv')
    assert sorted(frame['metric']) == ['pearson_r', 'qwk']
    assert set(frame['family']) == {'model'}
    assert set(frame['item']) == {'item01'}

    assert main(['concordance', '--metric', 'all', '--no-bootstrap', '--item', 'item01'] + bundle_flags(synth_bundle) +
                ['--out', str(tmp_path / 'all')]) == EXIT_OK
    assert len(pd.read_csv(tmp_path / 'all' / 'concordance.csv')) == 2 * len(MetricName)

    assert main(['concordance', '--metric', 'nope', '--no-bootstrap'] + bundle_flags(synth_bundle) +
                ['--out', str(tmp_path / 'bad')]) == EXIT_USAGE


def test_disattenuate_takes_a_family_pair(synth_bundle, tmp_path):
    args = ['disattenuate', '--item', 'item01', '--families', 'human,model', '--bootstrap', '500', '--seed', '1']
    assert main(args + bundle_flags(synth_bundle) + ['--out', str(tmp_path)]) == EXIT_OK
    frame = pd.read_csv(tmp_path / 'disattenuation.csv')
    assert list(zip(frame['item'], frame['family_a'], frame['family_b'])) == [('item01', 'human', 'model')]


def test_missing_family_item_leaves_a_gap_row(synth_bundle, tmp_path, caplog):
    ratings = pd.read_csv(synth_bundle['ratings.csv'])
    keep = ~((ratings['family'] == 'model') & (ratings['item_id'] == 'item02'))
    ratings.loc[keep].to_csv(synth_bundle['ratings.csv'], index=False)
    common = bundle_flags(synth_bundle) + ['--seed', '3', '--out', str(tmp_path)]

    with caplog.at_level(logging.WARNING):
        assert main(['gstudy'] + common) in (EXIT_OK, EXIT_NONCONVERGED)
        assert main(['disattenuate', '-B', '500'] + common) == EXIT_OK
        assert main(['dstudy', '--model-family', 'model'] + common) == EXIT_OK
    assert "no ratings for model on item item02" in caplog.text

    gstudy = pd.read_csv(tmp_path / 'gstudy.csv')
    gap = gstudy.loc[(gstudy['item'] == 'item02') & (gstudy['family'] == 'model')]
    assert len(gap) == 1 and gap['erho2'].isna().all() and gap['note'].str.contains('no ratings').all()
    assert gstudy.loc[gstudy['item'] == 'item01', 'erho2'].notna().all()

    dis = pd.read_csv(tmp_path / 'disattenuation.csv')
    assert dict(zip(dis['item'], dis['flags'].fillna(''))).get('item02') == 'missing'
    assert dis.loc[dis['item'] == 'item01', 'disatten'].notna().all()

    dstudy = pd.read_csv(tmp_path / 'dstudy.csv')
    assert dstudy.loc[dstudy['item'] == 'item02', 'phi_tilde'].isna().all()
    assert dstudy.loc[dstudy['item'] == 'item02', 'note'].str.contains('no ratings').all()
    assert set(dstudy.loc[dstudy['item'] == 'item01', 'scenario']) == {'human', 'second-human', 'hil', 'ensemble'}


@pytest.mark.slow
def test_every_output_is_byte_identical_across_thread_counts(tmp_path):
    spec = tmp_path / 'spec.json'
    spec.write_text(json.dumps(HRM_SPEC))
    data = tmp_path / 'data'
    assert main(['synth', '--spec', str(spec), '--seed', '5', '--out', str(data)]) == EXIT_OK
    paths = {name: data / name for name in ('ratings.csv', 'scale.json', 'roster.csv', 'attributes.csv')}

    for threads in ('1', '8'):
        results = tmp_path / f"results-{threads}"
        common = bundle_flags(paths) + ['--seed', '5', '--threads', threads, '--out', str(results)]
        assert main(['validate'] + common) == EXIT_OK
        assert main(['concordance', '-B', '100'] + common) == EXIT_OK
        assert main(['gstudy'] + common) in (EXIT_OK, EXIT_NONCONVERGED)
        assert main(['disattenuate', '-B', '500'] + common) == EXIT_OK
        assert main(['dstudy', '--model-family', 'model', '--baseline-obs', '4'] + common) in (EXIT_OK,
                                                                                               EXIT_NONCONVERGED)
        assert main(['hrm', 'fit', '--chains', '2', '--iters', '120', '--burnin', '60',
                     '--covariate', 'race'] + common) in (EXIT_OK, EXIT_NONCONVERGED)
        assert main(['report', '--in', str(results), '--out', str(tmp_path / f"report-{threads}")]) == EXIT_OK

    for kind in ('results', 'report'):
        one, eight = tmp_path / f"{kind}-1", tmp_path / f"{kind}-8"
        names = sorted(p.name for p in one.iterdir())
        assert names == sorted(p.name for p in eight.iterdir())
        for name in names:
            assert (one / name).read_bytes() == (eight / name).read_bytes(), name
    assert 'threads' not in (tmp_path / 'results-1' / 'concordance.meta.json').read_text()
