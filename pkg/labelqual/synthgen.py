"""
Synthetic rating datasets drawn from known generative parameters, with an oracle summary of everything planted.

g-study mode sums normal effects for teacher, lesson, segment, rater and teacher x rater on top of a grand mean
and rounds onto 1..K. hrm mode runs the two-stage rater model forward: ideal categories from the partial credit
model, then each rater's observed score from a discretized normal around ideal + bias.
"""
import json
import logging
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError

from .dataset import Dataset
from .errors import SchemaError, UsageError
from .gtheory import dependability, generalizability
from .hrm.probs import gpcm_log_probs, sdt_prob_table
from .models.dataset import ScaleSpec, TeacherAttributes
from .models.results import RESIDUAL, VarianceComponents, VarianceDesign
from .models.synth import Assignment, FamilySpec, SynthMode, SynthSpec
from .parallel import derive_rng

logger = logging.getLogger(__name__)

DISCRETIZATION_VARIANCE = 1.0 / 12.0
CLAMP_WARNING = 0.8

Oracle = Dict[str, object]


def load_synth_spec(path: Union[str, Path]) -> SynthSpec:
    try:
        data = json.loads(Path(path).read_text(encoding='utf-8'))
    except FileNotFoundError:
        raise SchemaError(f"synth spec not found: {path}")
    except json.JSONDecodeError as e:
        raise SchemaError(f"synth spec {path} is not valid JSON: {e}")
    try:
        return SynthSpec.model_validate(data)
    except ValidationError as e:
        raise SchemaError(f"synth spec {path}: {e}")


def _ids(spec: SynthSpec) -> Tuple[List[str], np.ndarray]:
    teachers = [f"T{t + 1:03d}" for t in range(spec.teachers)]
    lessons = np.array([[f"{teacher}-L{l + 1}" for l in range(spec.lessons)] for teacher in teachers])
    return teachers, lessons


def _assign(spec: SynthSpec, family: FamilySpec, rng: np.random.Generator) -> np.ndarray:
    """Boolean (teacher, lesson, rater) mask of who rates which lesson."""
    shape = (spec.teachers, spec.lessons, family.raters)
    if spec.assignment == Assignment.DENSE:
        return np.ones(shape, dtype=bool)
    # each lesson goes to raters_per_cell distinct raters of the family
    order = np.argsort(rng.random(shape), axis=2)
    return np.argsort(order, axis=2) < spec.raters_per_cell


def _frame(spec: SynthSpec, family: FamilySpec, mask: np.ndarray, scores: np.ndarray, item: str) -> pd.DataFrame:
    """Flattens (teacher, lesson, segment, rater) score arrays into ratings rows for the assigned raters."""
    teachers, lessons = _ids(spec)
    raters = np.array(spec.rater_ids(family))
    t, l, s, r = np.nonzero(np.broadcast_to(mask[:, :, None, :], scores.shape))
    return pd.DataFrame({
        'rater_id': raters[r],
        'family': family.name,
        'teacher_id': np.array(teachers)[t],
        'year': spec.year,
        'observation_id': lessons[t, l],
        'segment_index': s + 1,
        'item_id': item,
        'score': scores[t, l, s, r],
    })


def _roster(spec: SynthSpec) -> Dict[str, str]:
    return {rater: f.name for f in spec.families for rater in spec.rater_ids(f)}


def _family_variances(spec: SynthSpec, family: FamilySpec) -> Dict[str, float]:
    planted = dict(spec.gstudy.variances)
    planted.update(family.variances)
    return {
        'i': family.teacher_weight ** 2 * planted['i'],
        'o:i': family.lesson_weight ** 2 * planted['o:i'],
        's:o:i': family.lesson_weight ** 2 * planted['s:o:i'],
        'r': planted['r'],
        'ir': planted['ir'],
        RESIDUAL: planted[RESIDUAL],
    }


def _analytic(variances: Dict[str, float]) -> Dict[str, float]:
    nested = VarianceComponents(components=dict(variances), grand_mean=0.0, n_obs=0)
    crossed = dict(variances)
    # without a segment facet the segment draw is indistinguishable from residual noise
    crossed[RESIDUAL] += crossed.pop('s:o:i')
    flat = VarianceComponents(components=crossed, grand_mean=0.0, n_obs=0)
    return {
        'erho2_rxsoi': generalizability(nested, VarianceDesign.RxSOI),
        'phi_rxsoi': dependability(nested, VarianceDesign.RxSOI),
        'erho2_rxoi': generalizability(flat, VarianceDesign.RxOI),
        'phi_rxoi': dependability(flat, VarianceDesign.RxOI),
    }


def _lesson_variance(variances: Dict[str, float], segments: int) -> float:
    """Variance of one rater's lesson mean over ``segments`` segments."""
    return (variances['i'] + variances['o:i'] + variances['r'] + variances['ir'] +
            (variances['s:o:i'] + variances[RESIDUAL]) / segments)


def gen_gstudy_dataset(spec: SynthSpec) -> Tuple[Dataset, Oracle]:
    """
    Draws every effect from Normal(0, planted variance), sums, rounds and clamps onto 1..K.

    All families share the teacher, lesson and segment draws, scaled by their weights; rater effects and
    noise are drawn per family.

    :return: dataset and oracle summary (planted and observed-scale components, analytic reliabilities,
        analytic cross-lesson correlations for every family pair)
    """
    if spec.mode != SynthMode.GSTUDY:
        raise UsageError("gen_gstudy_dataset needs a gstudy-mode spec")

    K = spec.categories
    mean = (K + 1) / 2.0 if spec.gstudy.mean is None else spec.gstudy.mean
    shared = spec.gstudy.variances
    T, L, S = spec.teachers, spec.lessons, spec.segments

    frames = []
    clamped = 0
    total = 0
    for item in spec.item_ids():
        rng = derive_rng(spec.seed, 'gstudy', item)
        u = rng.normal(0.0, np.sqrt(shared['i']), T)
        v = rng.normal(0.0, np.sqrt(shared['o:i']), (T, L))
        w = rng.normal(0.0, np.sqrt(shared['s:o:i']), (T, L, S))

        for family in spec.families:
            planted = dict(shared)
            planted.update(family.variances)
            frng = derive_rng(spec.seed, 'gstudy', item, family.name)
            R = family.raters
            b = frng.normal(0.0, np.sqrt(planted['r']), R)
            c = frng.normal(0.0, np.sqrt(planted['ir']), (T, R))
            e = frng.normal(0.0, np.sqrt(planted[RESIDUAL]), (T, L, S, R))

            lesson = family.lesson_weight * (v[:, :, None] + w)
            x = (mean + family.mean_shift + family.teacher_weight * u[:, None, None, None] +
                 lesson[:, :, :, None] + b[None, None, None, :] + c[:, None, None, :] + e)
            mask = _assign(spec, family, frng)

            rated = np.broadcast_to(mask[:, :, None, :], x.shape)
            clamped += int(((x[rated] < 0.5) | (x[rated] >= K + 0.5)).sum())
            total += int(rated.sum())
            scores = np.clip(np.rint(x), 1, K).astype(np.int64)
            frames.append(_frame(spec, family, mask, scores, item))

    clamped_fraction = clamped / total if total else 0.0
    if clamped_fraction > CLAMP_WARNING:
        logger.warning("%.0f%% of the synthetic score mass was clamped onto 1 or %d; raise K or shrink the variances",
                       100 * clamped_fraction, K)
    else:
        logger.info("generated %d synthetic scores, %.1f%% clamped", total, 100 * clamped_fraction)

    scale = [ScaleSpec(item_id=item, category_count=K) for item in spec.item_ids()]
    ds = Dataset.from_frame(pd.concat(frames, ignore_index=True), scale, _roster(spec))

    families = dict()
    for family in spec.families:
        planted = _family_variances(spec, family)
        observed = dict(planted)
        observed[RESIDUAL] += DISCRETIZATION_VARIANCE
        families[family.name] = {
            'components': planted,
            'observed_components': observed,
            'planted': _analytic(planted),
            'observed': _analytic(observed),
        }

    pairs = []
    for a_idx, a in enumerate(spec.families):
        for b in spec.families[a_idx + 1:]:
            va = _lesson_variance(families[a.name]['observed_components'], S)
            vb = _lesson_variance(families[b.name]['observed_components'], S)
            corr = a.teacher_weight * b.teacher_weight * shared['i'] / np.sqrt(va * vb) if va * vb > 0 else 0.0
            ea = families[a.name]['observed']['erho2_rxsoi']
            eb = families[b.name]['observed']['erho2_rxsoi']
            pairs.append({'family_a': a.name, 'family_b': b.name, 'cross_lesson_corr': float(corr),
                          'disattenuated': float(corr / np.sqrt(ea * eb)) if ea > 0 and eb > 0 else None})

    oracle = {'mode': spec.mode.value, 'seed': spec.seed, 'mean': mean, 'categories': K,
              'discretization_variance': DISCRETIZATION_VARIANCE, 'clamped_fraction': clamped_fraction,
              'families': families, 'pairs': pairs, 'spec': spec.model_dump(mode='json')}
    return ds, oracle


def _item_parameters(spec: SynthSpec) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-item dimension (0-based), discrimination and step difficulties (first step 0)."""
    J, K, M = spec.items, spec.categories, spec.hrm.dimensions
    dims = np.array(spec.hrm.item_dimensions) - 1 if spec.hrm.item_dimensions else np.arange(J) % M
    if dims.min() < 0 or dims.max() >= M:
        raise UsageError(f"item dimensions must lie in 1..{M}")
    alpha = np.array(spec.hrm.alpha, dtype=float) if spec.hrm.alpha else np.ones(J)
    if spec.hrm.gamma:
        gamma = np.array(spec.hrm.gamma, dtype=float)
    else:
        gamma = np.tile(np.r_[0.0, np.linspace(-1.0, 1.0, K - 1)], (J, 1))
    gamma[:, 0] = 0.0
    return dims, alpha, gamma


def _draw_categories(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Inverse-cdf draw of a 1-based category per row of ``probs``."""
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(len(probs)) * cdf[:, -1]
    return np.minimum((cdf < u[:, None]).sum(axis=1), probs.shape[1] - 1) + 1


def gen_hrm_dataset(spec: SynthSpec) -> Tuple[Dataset, TeacherAttributes, Oracle]:
    """
    Runs the hierarchical rater model forward.

    Teacher ability Theta ~ N(0, I), lesson ability theta ~ N(Theta, theta_sd^2 I); each (lesson, item) gets an
    ideal category xi from the partial credit model, and every assigned rater scores each segment by drawing
    around xi + phi_r + delta_{r, level} with variability psi2_r.
    """
    if spec.mode != SynthMode.HRM:
        raise UsageError("gen_hrm_dataset needs an hrm-mode spec")

    plant = spec.hrm
    rng = derive_rng(spec.seed, 'hrm')
    T, L, S, J, K, M = spec.teachers, spec.lessons, spec.segments, spec.items, spec.categories, plant.dimensions
    teachers, lessons = _ids(spec)
    items = spec.item_ids()
    dims, alpha, gamma = _item_parameters(spec)

    Theta = rng.normal(0.0, 1.0, (T, M))
    theta = Theta[:, None, :] + rng.normal(0.0, plant.theta_sd, (T, L, M))

    location = (alpha[None, None, :] * theta[:, :, dims]).reshape(-1)
    log_probs = gpcm_log_probs(location, np.tile(gamma, (T * L, 1)), np.full(T * L * J, K))
    xi = _draw_categories(np.exp(log_probs), rng).reshape(T, L, J)

    levels: Dict[str, str] = dict()
    if plant.attribute_levels:
        names = sorted(plant.attribute_levels)
        picks = rng.choice(len(names), size=T, p=[plant.attribute_levels[n] for n in names])
        levels = {teacher: names[k] for teacher, k in zip(teachers, picks)}
    attributes = TeacherAttributes(values={t: {plant.attribute: lv} for t, lv in levels.items()})

    known = set(_roster(spec))
    for rater in set(plant.phi) | set(plant.psi2) | set(plant.delta):
        if rater not in known:
            raise UsageError(f"planted parameter for unknown rater {rater!r}")

    frames = []
    for family in spec.families:
        raters = spec.rater_ids(family)
        mask = _assign(spec, family, rng)
        phi = np.array([plant.phi.get(r, 0.0) for r in raters])
        psi2 = np.array([plant.psi2.get(r, plant.default_psi2) for r in raters])
        delta = np.array([[plant.delta.get(r, dict()).get(levels.get(t, ''), 0.0) for r in raters]
                          for t in teachers])

        for j, item in enumerate(items):
            shape = (T, L, S, family.raters)
            centre_xi = np.broadcast_to(xi[:, :, None, None, j], shape).reshape(-1).astype(float)
            bias = np.broadcast_to((phi[None, :] + delta)[:, None, None, :], shape).reshape(-1)
            width = np.broadcast_to(psi2[None, None, None, :], shape).reshape(-1)
            probs = sdt_prob_table(centre_xi, bias, width, np.full(len(bias), K), K)
            scores = _draw_categories(probs, rng).reshape(shape)
            frames.append(_frame(spec, family, mask, scores, item))

    if len(set(dims.tolist())) != M:
        raise UsageError(f"every one of the {M} dimensions needs at least one item")
    scale = [ScaleSpec(item_id=item, category_count=K, dimension=int(d) + 1) for item, d in zip(items, dims)]
    ds = Dataset.from_frame(pd.concat(frames, ignore_index=True), scale, _roster(spec), attributes)
    logger.info("generated %d synthetic scores from the rater model", len(ds.records))

    oracle = {
        'mode': spec.mode.value, 'seed': spec.seed, 'categories': K,
        'Theta': {t: Theta[k].tolist() for k, t in enumerate(teachers)},
        'theta': {lessons[t, l]: theta[t, l].tolist() for t in range(T) for l in range(L)},
        'xi': [{'observation_id': lessons[t, l], 'item_id': items[j], 'xi': int(xi[t, l, j])}
               for t in range(T) for l in range(L) for j in range(J)],
        'alpha': dict(zip(items, alpha.tolist())),
        'gamma': {item: gamma[j].tolist() for j, item in enumerate(items)},
        'dimensions': {item: int(d) + 1 for item, d in zip(items, dims)},
        'phi': {r: plant.phi.get(r, 0.0) for r in sorted(known)},
        'psi2': {r: plant.psi2.get(r, plant.default_psi2) for r in sorted(known)},
        'delta': plant.delta,
        'levels': levels,
        'spec': spec.model_dump(mode='json'),
    }
    return ds, attributes, oracle


def generate(spec: SynthSpec) -> Tuple[Dataset, Oracle]:
    if spec.mode == SynthMode.GSTUDY:
        return gen_gstudy_dataset(spec)
    ds, _, oracle = gen_hrm_dataset(spec)
    return ds, oracle


def write_bundle(ds: Dataset, oracle: Oracle, out_dir: Union[str, Path]) -> Dict[str, Path]:
    """The standard dataset CSV bundle plus ``oracle.json``."""
    paths = ds.write(out_dir)
    paths['oracle.json'] = Path(out_dir) / 'oracle.json'
    paths['oracle.json'].write_text(json.dumps(oracle, indent=2, sort_keys=True) + '\n', encoding='utf-8')
    return paths
