"""
Result files and the report bundle.

Every analysis subcommand writes ``<name>.csv`` and ``<name>.meta.json`` (operation, dataset digest, seed, flags)
through ``write_result``. ``build_panels`` joins a directory of those into six tidy plot-data panels plus a verdict
grid, and ``emit`` writes them byte-stably with a manifest of SHA-256 digests.
"""
import hashlib
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import pandas as pd

from .errors import BundleJoinError, DatasetError
from .labelqual_config import LABELQUAL_VERSION, settings
from .models.results import MetricName

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

PANELS = ('distributions', 'concordance', 'gtheory', 'bias', 'fairness', 'dstudy')
PANEL_COLUMNS = ['item', 'family', 'series', 'x', 'y', 'lo', 'hi']
VERDICT_COLUMNS = ['item', 'family', 'better', 'worse', 'compared', 'verdict']

# result file names each panel is assembled from
SOURCES: Dict[str, tuple] = {
    'distributions': ('distributions',),
    'concordance': ('concordance',),
    'gtheory': ('gstudy', 'disattenuation'),
    'bias': ('hrm',),
    'fairness': ('hrm',),
    'dstudy': ('dstudy',),
}

BETTER, WORSE, UNDECIDED = '✓', '✗', '?'
FLOAT_FORMAT = '%.6f'
TIE = 1e-9


def _dump_json(data, path: Path) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False) + '\n',
                    encoding='utf-8')


def _write_csv(frame: pd.DataFrame, path: Path) -> None:
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')


def _records(frame: pd.DataFrame) -> List[dict]:
    """JSON-safe rows: NaN becomes null and floats are rounded like the CSV."""
    rows = []
    for row in frame.to_dict(orient='records'):
        clean = dict()
        for key, value in row.items():
            if isinstance(value, (float, np.floating)):
                clean[key] = None if np.isnan(value) else float(FLOAT_FORMAT % value)
            elif isinstance(value, np.integer):
                clean[key] = int(value)
            else:
                clean[key] = value
        rows.append(clean)
    return rows


def write_result(frame: pd.DataFrame, name: str, out_dir: PathLike, dataset: Optional[str], seed: Optional[int],
                 flags: Optional[dict] = None) -> Path:
    """
    Writes one analysis output. Rows are sorted on every column so the file only depends on its content.

    :return: path of the CSV
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ordered = frame.sort_values(list(frame.columns), kind='mergesort', na_position='first').reset_index(drop=True) \
        if len(frame) else frame
    path = out / f"{name}.csv"
    _write_csv(ordered, path)
    meta = {'operation': name, 'dataset': dataset, 'seed': seed, 'flags': flags or dict(),
            'version': LABELQUAL_VERSION, 'rows': int(len(frame))}
    _dump_json(meta, out / f"{name}.meta.json")
    logger.info("wrote %d rows to %s", len(frame), path)
    return path


class ResultSet(object):
    frames: Dict[str, pd.DataFrame]
    meta: Dict[str, dict]

    def __init__(self, frames: Dict[str, pd.DataFrame], meta: Dict[str, dict]):
        self.frames = frames
        self.meta = meta

    def get(self, name: str) -> Optional[pd.DataFrame]:
        return self.frames.get(name)


LABEL_COLUMNS = ('item', 'item_id', 'family', 'family_a', 'family_b', 'rater', 'level', 'scenario', 'metric',
                 'design')


def _labels_as_text(frame: pd.DataFrame) -> pd.DataFrame:
    for column in LABEL_COLUMNS:
        if column in frame.columns:
            frame[column] = frame[column].where(frame[column].isna(), frame[column].astype(str))
    return frame


def load_results(in_dir: PathLike) -> ResultSet:
    """Reads every ``<name>.csv`` that has a matching ``<name>.meta.json`` in ``in_dir``."""
    root = Path(in_dir)
    if not root.is_dir():
        raise DatasetError(f"results directory not found: {root}")

    frames, meta = dict(), dict()
    for meta_path in sorted(root.glob('*.meta.json')):
        name = meta_path.name[:-len('.meta.json')]
        csv_path = root / f"{name}.csv"
        if not csv_path.exists():
            logger.warning("%s has no matching %s; skipped", meta_path.name, csv_path.name)
            continue
        try:
            meta[name] = json.loads(meta_path.read_text(encoding='utf-8'))
            frames[name] = _labels_as_text(pd.read_csv(csv_path))
        except (json.JSONDecodeError, pd.errors.ParserError) as e:
            raise DatasetError(f"result {name} in {root} does not parse: {e}")
        except pd.errors.EmptyDataError:
            frames[name] = pd.DataFrame()
    return ResultSet(frames, meta)


def _panel(rows: pd.DataFrame) -> pd.DataFrame:
    frame = rows.reindex(columns=PANEL_COLUMNS)
    frame['x'] = frame['x'].astype(object).where(frame['x'].notna(), '')
    frame['x'] = frame['x'].map(str)
    return frame.sort_values(['item', 'family', 'series', 'x'], kind='mergesort').reset_index(drop=True)


def distributions_panel(results: ResultSet) -> Optional[pd.DataFrame]:
    frame = results.get('distributions')
    if frame is None or frame.empty:
        return None
    return _panel(pd.DataFrame({'item': frame['item_id'], 'family': frame['family'], 'series': 'share',
                                'x': frame['score'], 'y': frame['share']}))


def concordance_panel(results: ResultSet) -> Optional[pd.DataFrame]:
    frame = results.get('concordance')
    if frame is None or frame.empty:
        return None
    return _panel(pd.DataFrame({'item': frame['item'], 'family': frame['family'], 'series': frame['metric'],
                                'y': frame['estimate'], 'lo': frame['ci_low'], 'hi': frame['ci_high']}))


def gtheory_panel(results: ResultSet) -> Optional[pd.DataFrame]:
    parts = []
    gstudy = results.get('gstudy')
    if gstudy is not None and not gstudy.empty:
        for column in ('erho2', 'phi'):
            parts.append(pd.DataFrame({'item': gstudy['item'], 'family': gstudy['family'],
                                       'series': column + ':' + gstudy['design'], 'y': gstudy[column]}))

    dis = results.get('disattenuation')
    if dis is not None and not dis.empty:
        pair = dis['family_a'] + '|' + dis['family_b']
        parts.append(pd.DataFrame({'item': dis['item'], 'family': pair, 'series': 'raw',
                                   'y': dis['raw'], 'lo': dis['raw_lo'], 'hi': dis['raw_hi']}))
        parts.append(pd.DataFrame({'item': dis['item'], 'family': pair, 'series': 'disattenuated',
                                   'y': dis['disatten'], 'lo': dis['dis_lo'], 'hi': dis['dis_hi']}))
    if not parts:
        return None
    return _panel(pd.concat(parts, ignore_index=True))


def bias_panel(results: ResultSet) -> Optional[pd.DataFrame]:
    frame = results.get('hrm')
    if frame is None or frame.empty:
        return None
    phi = pd.DataFrame({'item': frame['item'], 'family': frame['family'], 'series': 'phi:' + frame['rater'],
                        'x': frame['level'], 'y': frame['phi'], 'lo': frame['phi_lo'], 'hi': frame['phi_hi']})
    psi = pd.DataFrame({'item': frame['item'], 'family': frame['family'], 'series': 'psi:' + frame['rater'],
                        'x': frame['level'], 'y': frame['psi']})
    return _panel(pd.concat([phi, psi], ignore_index=True))


def fairness_panel(results: ResultSet) -> Optional[pd.DataFrame]:
    frame = results.get('hrm')
    if frame is None or frame.empty or 'delta' not in frame.columns:
        return None
    frame = frame.loc[frame['delta'].notna()]
    if frame.empty:
        return None
    return _panel(pd.DataFrame({'item': frame['item'], 'family': frame['family'], 'series': frame['rater'],
                                'x': frame['level'], 'y': frame['delta'], 'lo': frame['delta_lo'],
                                'hi': frame['delta_hi']}))


def dstudy_panel(results: ResultSet) -> Optional[pd.DataFrame]:
    frame = results.get('dstudy')
    if frame is not None and 'scenario' in frame.columns:
        frame = frame.loc[frame['scenario'].notna()]
    if frame is None or frame.empty:
        return None
    return _panel(pd.DataFrame({'item': frame['item'], 'family': frame['scenario'], 'series': 'phi_tilde',
                                'x': frame['n_obs'], 'y': frame['phi_tilde']}))


BUILDERS = {
    'distributions': distributions_panel,
    'concordance': concordance_panel,
    'gtheory': gtheory_panel,
    'bias': bias_panel,
    'fairness': fairness_panel,
    'dstudy': dstudy_panel,
}


def verdicts(concordance: Optional[pd.DataFrame], human_family: Optional[str] = None) -> pd.DataFrame:
    """
    Per (item, family) verdict against the human family on the concordance metrics both define:
    better on more than half of them is a pass, worse on more than half a fail, anything else undecided.
    """
    human_family = human_family or settings.human_family
    if concordance is None or concordance.empty:
        return pd.DataFrame(columns=VERDICT_COLUMNS)

    rows = []
    metrics = {m.value for m in MetricName}
    frame = concordance.loc[concordance['metric'].isin(metrics)]
    for item, block in frame.groupby('item', sort=True):
        human = block.loc[block['family'] == human_family].set_index('metric')['estimate']
        for family, scores in block.loc[block['family'] != human_family].groupby('family', sort=True):
            scores = scores.set_index('metric')['estimate']
            both = [m for m in scores.index if m in human.index and pd.notna(scores[m]) and pd.notna(human[m])]
            better = sum(1 for m in both if scores[m] > human[m] + TIE)
            worse = sum(1 for m in both if scores[m] < human[m] - TIE)
            if both and better > len(both) / 2:
                verdict = BETTER
            elif both and worse > len(both) / 2:
                verdict = WORSE
            else:
                verdict = UNDECIDED
            rows.append({'item': item, 'family': family, 'better': better, 'worse': worse, 'compared': len(both),
                         'verdict': verdict})
    return pd.DataFrame(rows, columns=VERDICT_COLUMNS)


class PanelBundle(object):
    panels: Dict[str, pd.DataFrame]
    verdicts: pd.DataFrame
    absent: List[str]
    provenance: Dict[str, dict]
    dataset: Optional[str]

    def __init__(self, panels: Dict[str, pd.DataFrame], verdicts: pd.DataFrame, absent: List[str],
                 provenance: Dict[str, dict], dataset: Optional[str]):
        self.panels = panels
        self.verdicts = verdicts
        self.absent = absent
        self.provenance = provenance
        self.dataset = dataset

    @classmethod
    def empty(cls) -> 'PanelBundle':
        return cls(dict(), pd.DataFrame(columns=VERDICT_COLUMNS), list(PANELS), dict(), None)


def build_panels(results: ResultSet, human_family: Optional[str] = None) -> PanelBundle:
    """
    Joins result files on (item, family). All inputs must come from one dataset; panels whose inputs are
    missing are listed as absent rather than filled.
    """
    digests = {name: meta.get('dataset') for name, meta in results.meta.items() if meta.get('dataset')}
    if len(set(digests.values())) > 1:
        raise BundleJoinError(f"results come from different datasets: {json.dumps(digests, sort_keys=True)}")
    dataset = next(iter(digests.values()), None)

    panels, absent, provenance = dict(), [], dict()
    for name in PANELS:
        panel = BUILDERS[name](results)
        if panel is None:
            absent.append(name)
            continue
        panels[name] = panel
        provenance[name] = {source: {'operation': results.meta[source].get('operation', source),
                                     'dataset': results.meta[source].get('dataset'),
                                     'seed': results.meta[source].get('seed')}
                            for source in SOURCES[name] if source in results.meta}
    if absent:
        logger.warning("report panels absent: %s", ', '.join(absent))

    return PanelBundle(panels, verdicts(results.get('concordance'), human_family), absent, provenance, dataset)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def emit(bundle: PanelBundle, out_dir: PathLike) -> Dict[str, Path]:
    """Writes ``<panel>.csv`` and ``<panel>.json`` per panel, ``verdicts.csv`` and ``manifest.json``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DatasetError(f"cannot write report to {out}: {e}")

    paths: Dict[str, Path] = dict()
    manifest = {'version': LABELQUAL_VERSION, 'dataset': bundle.dataset, 'panels': dict(), 'absent': bundle.absent}
    for name in sorted(bundle.panels):
        frame = bundle.panels[name]
        csv_path, json_path = out / f"{name}.csv", out / f"{name}.json"
        _write_csv(frame, csv_path)
        _dump_json({'panel': name, 'columns': PANEL_COLUMNS, 'rows': _records(frame)}, json_path)
        paths[csv_path.name], paths[json_path.name] = csv_path, json_path
        manifest['panels'][name] = {
            'rows': int(len(frame)),
            'files': {p.name: _sha256(p) for p in (csv_path, json_path)},
            'provenance': bundle.provenance.get(name, dict()),
        }

    verdict_path = out / 'verdicts.csv'
    _write_csv(bundle.verdicts, verdict_path)
    paths[verdict_path.name] = verdict_path
    manifest['verdicts'] = {'rows': int(len(bundle.verdicts)), 'files': {verdict_path.name: _sha256(verdict_path)}}

    manifest_path = out / 'manifest.json'
    _dump_json(manifest, manifest_path)
    paths[manifest_path.name] = manifest_path
    logger.info("report: %d panels, %d absent, written to %s", len(bundle.panels), len(bundle.absent), out)
    return paths
