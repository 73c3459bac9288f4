"""The two modelling phases.

Phase 1 repeats, over resampled train/test splits, mining on the
training patients, MSMR against each outcome, and a fit of every
registered learner; the features the learners actually use are pooled
into a union per outcome and learners are ranked by median test AUC.
Phase 2 fits the top learners on demographic, clinical (the phase 1
union) and combined features over fresh resamples and summarizes
discrimination, calibration and relative influence.
"""
import contextlib
import warnings

import numpy as np
import pandas as pd
import scipy.sparse
from nengo.utils.stdlib import Timer

from . import cache, msmr, parallel, tspm
from .cohort import (
    apply_temporal_buffer, cohort_summary, scenario_probabilities,
    split_train_test, stratified_summary)
from .evaluation import (
    MetricSummary, auc_score, calibration_bins, pooled_calibration,
    summarize)
from .exceptions import DataError, MlhoError, PipelineError
from .learners import fit_learner, relative_influence
from .settings import CLINICAL, COMBINED, DEMOGRAPHIC, PipelineConfig
from .utils import derive_seed, log

PHASE1_KEY = 'phase1'
PHASE2_KEY = 'phase2'


class Result(object):
    """Named bag of results that can be stored with `mlho.cache`."""

    saved = []
    subdir = None

    def __init__(self, **kwargs):
        for key in self.saved:
            setattr(self, key, kwargs.pop(key, None))
        # kwargs should be empty now
        for key in kwargs:
            raise TypeError("got an unexpected keyword argument '%s'" % key)

    def save_dict(self):
        return {k: getattr(self, k) for k in self.saved}

    @classmethod
    def load(cls, key, root=None):
        data = cache.load_obj(key, subdir=cls.subdir, root=root)
        if data is None:
            raise DataError("no saved %s results under '%s'"
                            % (key, root))
        return cls(**data)

    def save(self, key, root=None):
        return cache.cache_obj(self.save_dict(), key=key,
                               subdir=self.subdir, root=root)


def sort_features(features):
    return sorted(features, key=lambda f: (tspm.KINDS.index(f.kind),
                                           f.code_a, f.code_b or ''))


@contextlib.contextmanager
def cell_context(**context):
    """Attach ``context`` to any error raised inside a pipeline cell."""
    try:
        yield
    except MlhoError as e:
        raise e.with_context(**context)
    except Exception as e:
        raise PipelineError("%s: %s" % (type(e).__name__, e)).with_context(
            **context) from e


def prepare(cohort, config):
    """Apply the temporal buffer and check every outcome is modelable."""
    buffered = apply_temporal_buffer(cohort, config.cohort.buffer_days,
                                     inclusive=config.cohort.buffer_inclusive)
    for outcome in config.outcomes:
        y = buffered.labels(outcome)
        if y.min() == y.max():
            raise DataError("outcome '%s' has only one class in the cohort"
                            % outcome)
    return buffered


def resample(cohort, config, phase, iteration):
    """The train/test split used by ``phase`` at ``iteration``."""
    seed = derive_seed(config.seed, phase, iteration, 'split')
    return split_train_test(cohort, config.cohort.test_fraction, seed,
                            stratify=config.cohort.stratify,
                            outcomes=config.outcomes)


def _mine_clinical(cohort, config, dictionary=None):
    m = config.msmr
    min_prevalence = m.min_prevalence if (
        m.mine_prefilter and dictionary is None) else None
    return tspm.mine_features(cohort, config.clinical_kinds,
                              dictionary=dictionary,
                              min_prevalence=min_prevalence,
                              max_pairs=m.max_pairs, jobs=1)


# ########
# Phase 1
# ########

class Phase1Report(Result):
    """Phase 1 outcome.

    ``aucs`` has one row per (outcome, iteration, algorithm);
    ``screens`` maps ``(outcome, iteration)`` to the sorted features any
    learner used; ``selected`` maps the same keys to the MSMR output;
    ``msmr_counts`` has the feature count after each MSMR step.
    """

    saved = ['config', 'aucs', 'screens', 'selected', 'msmr_counts',
             'selections', 'ranking']

    def union(self, outcome=None, n_iterations=None):
        """Features screened in any iteration, for one or all outcomes."""
        features = set()
        for (o, it), screened in self.screens.items():
            if outcome not in (None, o):
                continue
            if n_iterations is not None and it >= n_iterations:
                continue
            features.update(screened)
        return tuple(sort_features(features))

    def clinical_features(self, outcome, union_mode):
        return self.union(None if union_mode == 'pooled' else outcome)

    def composition(self):
        """Raw and sequence feature counts of each outcome's union."""
        rows = []
        outcomes = sorted({o for o, _ in self.screens})
        for outcome in outcomes + ['pooled']:
            union = self.union(None if outcome == 'pooled' else outcome)
            rows.append((outcome, len(union),
                         sum(f.kind == tspm.RAW for f in union),
                         sum(f.kind == tspm.SEQUENCE for f in union)))
        return pd.DataFrame(rows, columns=['outcome', 'n_features', 'raw',
                                           'sequence'])

    def ranking_table(self):
        """Median test AUC per algorithm, per outcome and overall."""
        per_outcome = self.aucs.groupby(['outcome', 'algorithm'])['auc'] \
            .median().reset_index()
        overall = self.aucs.groupby('algorithm')['auc'].median() \
            .reset_index()
        overall.insert(0, 'outcome', 'all')
        table = pd.concat([per_outcome, overall], ignore_index=True)
        return table.rename(columns={'auc': 'median_auc'})


def rank_algorithms(aucs):
    """Algorithms by decreasing median AUC over all outcomes."""
    medians = aucs.groupby('algorithm')['auc'].median()
    return sorted(medians.index, key=lambda a: (-medians[a], a))


def _phase1_iteration(cohort, config, iteration):
    with Timer() as t:
        with cell_context(iteration=iteration):
            train, test = resample(cohort, config, 'phase1', iteration)
            mined = _mine_clinical(train, config)
    log("Iteration %d: mined %d features from %d training patients in %.3f "
        "seconds" % (iteration, mined.n_features, len(train), t.duration))

    out = {}
    for outcome in config.outcomes:
        with cell_context(outcome=outcome, iteration=iteration):
            y_train = train.labels(outcome)
            y_test = test.labels(outcome)
            m = config.msmr
            result = msmr.run_msmr(mined, y_train, m.min_prevalence,
                                   m.mi_keep, m.jmi_budget)
            selected = result.matrix
            X_test = _mine_clinical(test, config,
                                    dictionary=selected.features)
            aucs, screened = [], set()
            for name in config.learners:
                seed = derive_seed(config.seed, 'phase1', outcome,
                                   iteration, name)
                with Timer() as t:
                    model = fit_learner(name, selected, y_train, config,
                                        seed, config.cv_folds_phase1)
                auc = auc_score(model.predict_proba(X_test), y_test)
                log("Iteration %d, %s: %s test AUC %.4f (%.3f seconds)"
                    % (iteration, outcome, name, auc, t.duration))
                aucs.append((outcome, iteration, name, auc))
                screened.update(selected.features[j] for j in model.screen())
            out[outcome] = {
                'aucs': aucs,
                'screen': tuple(sort_features(screened)),
                'selected': selected.features,
                'counts': result.counts,
                'selection': msmr.selection_report(
                    result.ranked, result.selection, result.mi),
            }
    return out


def run_phase1(cohort, config):
    """Iterative feature and algorithm selection."""
    config = config if isinstance(config, PipelineConfig) else (
        PipelineConfig.loads(config))
    cohort = prepare(cohort, config)
    n = config.cohort.n_resamples
    log("==== Phase 1: %d iterations over %d patients ====" % (n,
                                                              len(cohort)))
    results = parallel.run_cells(
        _phase1_iteration,
        [(it, (cohort, config, it)) for it in range(n)],
        jobs=config.jobs)

    aucs, screens, selected, counts, selections = [], {}, {}, [], {}
    for it in range(n):
        for outcome in config.outcomes:
            r = results[it][outcome]
            aucs.extend(r['aucs'])
            screens[outcome, it] = r['screen']
            selected[outcome, it] = r['selected']
            selections[outcome, it] = r['selection']
            counts.extend((outcome, it, step, c) for step, c in r['counts'])
    aucs = pd.DataFrame(aucs, columns=['outcome', 'iteration', 'algorithm',
                                       'auc'])
    report = Phase1Report(
        config=config.dumps(), aucs=aucs, screens=screens,
        selected=selected, selections=selections,
        msmr_counts=pd.DataFrame(counts, columns=['outcome', 'iteration',
                                                  'step', 'count']),
        ranking=rank_algorithms(aucs))
    log("Algorithm ranking: %s" % ", ".join(report.ranking))
    return report


# ########
# Phase 2
# ########

class Phase2Report(Result):
    """Phase 2 outcome.

    Keys of ``summaries``, ``calibration``, ``influence`` and
    ``model_counts`` are ``(outcome, feature_class)``; ``curves`` adds
    the algorithm. ``influence`` maps features to relative influence
    averaged over the gbm fits (maximum 100).
    """

    saved = ['config', 'algorithms', 'aucs', 'summaries', 'calibration',
             'curves', 'influence', 'model_counts', 'scenarios',
             'summary', 'strata']

    def summary_table(self):
        rows = [(o, fc, s.mean, s.lower, s.upper, len(s.aucs))
                for (o, fc), s in sorted(self.summaries.items())]
        return pd.DataFrame(rows, columns=['outcome', 'feature_class',
                                           'mean_auc', 'ci_lower',
                                           'ci_upper', 'n_models'])


def _feature_blocks(train, test, union, classes, config):
    """Training and test matrices per feature class, over train columns."""
    blocks = {}
    if DEMOGRAPHIC in classes or COMBINED in classes:
        levels = train.levels
        demo = (tspm.mine_demographic(train, levels),
                tspm.mine_demographic(test, levels))
    if CLINICAL in classes or COMBINED in classes:
        if len(union) == 0:
            raise DataError("the phase 1 feature union is empty; loosen "
                            "msmr.min_prevalence, msmr.mi_keep or "
                            "msmr.jmi_budget")
        clinical = (_mine_clinical(train, config, dictionary=union),
                    _mine_clinical(test, config, dictionary=union))
    for fc in classes:
        if fc == DEMOGRAPHIC:
            blocks[fc] = demo
        elif fc == CLINICAL:
            blocks[fc] = clinical
        else:
            blocks[fc] = tuple(_concat(c, d) for c, d in zip(clinical, demo))
    return blocks


def _concat(clinical, demo):
    return tspm.SparseFeatureMatrix(
        scipy.sparse.hstack([clinical.data, demo.data], format='csr'),
        clinical.features + demo.features, clinical.patient_ids)


def _phase2_iteration(cohort, config, unions, algorithms, iteration):
    with cell_context(iteration=iteration):
        train, test = resample(cohort, config, 'phase2', iteration)
    out = []
    for outcome in config.outcomes:
        with cell_context(outcome=outcome, iteration=iteration):
            blocks = _feature_blocks(train, test, unions[outcome],
                                     config.feature_classes, config)
            y_train = train.labels(outcome)
            y_test = test.labels(outcome)
            for fc in config.feature_classes:
                X_train, X_test = blocks[fc]
                for name in algorithms:
                    seed = derive_seed(config.seed, 'phase2', outcome, fc,
                                       iteration, name)
                    model = fit_learner(name, X_train, y_train, config,
                                        seed, config.cv_folds_phase2)
                    scores = model.predict_proba(X_test)
                    auc = auc_score(scores, y_test)
                    with warnings.catch_warnings():
                        warnings.simplefilter('ignore')
                        curve = calibration_bins(
                            scores, y_test, config.calibration_bins,
                            config.calibration_scheme)
                    influence = None
                    if model.family == 'gbm':
                        influence = {X_train.features[j]: v for j, v in
                                     relative_influence(model).items()}
                    log("Iteration %d, %s, %s: %s test AUC %.4f"
                        % (iteration, outcome, fc, name, auc))
                    out.append((outcome, fc, iteration, name, auc, curve,
                                influence))
    return out


def average_influence(reports):
    """Mean relative influence per feature (absent = 0), rescaled to 100.

    Zero entries are dropped; ordered by decreasing influence.
    """
    reports = [r for r in reports if r is not None]
    if len(reports) == 0:
        return {}
    total = {}
    for r in reports:
        for f, v in r.items():
            total[f] = total.get(f, 0.) + v
    mean = {f: v / len(reports) for f, v in total.items() if v > 0}
    if len(mean) == 0:
        return {}
    top = max(mean.values())
    scaled = {f: 100. * (v / top) for f, v in mean.items()}
    return dict(sorted(scaled.items(), key=lambda kv: (
        -kv[1], tspm.describe(kv[0]))))


def run_phase2(cohort, config, phase1):
    """Final models per outcome and feature class."""
    config = config if isinstance(config, PipelineConfig) else (
        PipelineConfig.loads(config))
    if phase1.ranking is None or len(phase1.ranking) == 0:
        raise DataError("phase 1 produced no algorithm ranking")
    algorithms = list(phase1.ranking[:config.n_top_algorithms])
    cohort = prepare(cohort, config)
    unions = {o: phase1.clinical_features(o, config.union_mode)
              for o in config.outcomes}
    n = config.cohort.n_resamples
    log("==== Phase 2: %s over %d iterations ====" % (
        ", ".join(algorithms), n))
    results = parallel.run_cells(
        _phase2_iteration,
        [(it, (cohort, config, unions, algorithms, it)) for it in range(n)],
        jobs=config.jobs)

    rows, curves, influences, counts = [], {}, {}, {}
    for it in range(n):
        for outcome, fc, iteration, name, auc, curve, infl in results[it]:
            rows.append((outcome, fc, iteration, name, auc))
            curves.setdefault((outcome, fc, name), []).append(curve)
            influences.setdefault((outcome, fc), []).append(infl)
            counts[outcome, fc] = counts.get((outcome, fc), 0) + 1
    aucs = pd.DataFrame(rows, columns=['outcome', 'feature_class',
                                       'iteration', 'algorithm', 'auc'])

    summaries, calibration, influence = {}, {}, {}
    for (outcome, fc), group in aucs.groupby(['outcome', 'feature_class'],
                                             sort=True):
        values = group['auc'].values
        if values.size >= 2:
            summaries[outcome, fc] = summarize(outcome, fc, values)
        else:
            summaries[outcome, fc] = MetricSummary(
                outcome, fc, values[0], np.nan, np.nan, tuple(values))
        calibration[outcome, fc] = pooled_calibration(
            c for name in algorithms
            for c in curves[outcome, fc, name])
        influence[outcome, fc] = average_influence(influences[outcome, fc])
    expected = n * len(algorithms)
    assert all(c == expected for c in counts.values())

    return Phase2Report(
        config=config.dumps(), algorithms=algorithms, aucs=aucs,
        summaries=summaries, calibration=calibration,
        curves={k: pooled_calibration(v) for k, v in curves.items()},
        influence=influence, model_counts=counts,
        scenarios=scenario_probabilities(cohort),
        summary=cohort_summary(cohort), strata=stratified_summary(cohort))
