"""Delimited-text reports of a finished pipeline run.

Every file is written with fixed float formatting and ``\\n`` line
endings, so equal inputs give byte-identical files; ``manifest.txt``
lists each file with its SHA-256.
"""
import hashlib
import os

import numpy as np
import pandas as pd

from . import tspm
from .exceptions import DataError, PipelineError
from .settings import CLINICAL, COMBINED, PipelineConfig
from .utils import log

MANIFEST = "manifest.txt"
FLOAT_FORMAT = "%.6f"
N_TOP_FEATURES = 5


def load_cluster_map(path):
    """``code -> cluster_label`` from a ``code,cluster_label`` file.

    A missing path gives an empty map; so does an empty file.
    """
    if path is None or path == '':
        return {}
    if not os.path.exists(path):
        raise DataError("cluster map '%s' does not exist" % path)
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        return {}
    missing = {'code', 'cluster_label'} - set(df.columns)
    if len(missing) > 0:
        raise DataError("cluster map lacks columns: %s"
                        % ", ".join(sorted(missing)), line=1)
    return dict(zip(df['code'].str.strip(), df['cluster_label'].str.strip()))


def cluster_label(feature, clusters):
    if feature.kind == tspm.DEMOGRAPHIC:
        return ''
    labels = [clusters.get(c, '') for c in feature.codes()]
    if all(lbl == '' for lbl in labels):
        return ''
    return "->".join(labels)


def influence_frame(influence, clusters):
    rows = []
    for (outcome, fc), ranked in sorted(influence.items()):
        for rank, (f, value) in enumerate(ranked.items(), start=1):
            rows.append((outcome, fc, rank, f.kind, tspm.describe(f),
                         cluster_label(f, clusters), value))
    return pd.DataFrame(rows, columns=['outcome', 'feature_class', 'rank',
                                       'kind', 'feature', 'cluster_label',
                                       'influence'])


def top_features(influence, outcomes, clusters, n=N_TOP_FEATURES):
    """Most influential non-demographic features per outcome.

    Uses the combined models when they were run, else the clinical ones.
    """
    rows = []
    for outcome in outcomes:
        for fc in (COMBINED, CLINICAL):
            if (outcome, fc) in influence:
                break
        else:
            continue
        clinical = [(f, v) for f, v in influence[outcome, fc].items()
                    if f.kind != tspm.DEMOGRAPHIC]
        for rank, (f, v) in enumerate(clinical[:n], start=1):
            rows.append((outcome, fc, rank, tspm.describe(f),
                         cluster_label(f, clusters), v))
    return pd.DataFrame(rows, columns=['outcome', 'feature_class', 'rank',
                                       'feature', 'cluster_label',
                                       'influence'])


def nonzero_influence_counts(influence):
    """Distinct features with nonzero influence for any outcome."""
    counts = {}
    for (_, fc), ranked in influence.items():
        counts.setdefault(fc, set()).update(ranked)
    rows = [(fc, len(features)) for fc, features in sorted(counts.items())]
    return pd.DataFrame(rows, columns=['feature_class', 'n_features'])


def table1(phase2):
    table = phase2.summary_table()
    table['auc_ci'] = [
        "%.3f (%.3f-%.3f)" % (m, lo, hi) if np.isfinite(lo) else "%.3f" % m
        for m, lo, hi in zip(table['mean_auc'], table['ci_lower'],
                             table['ci_upper'])]
    return table


def calibration_frame(curves):
    rows = []
    for key, curve in sorted(curves.items()):
        for b in range(curve.count.size):
            rows.append(key + (b, curve.mean_pred[b], curve.obs_frac[b],
                               int(curve.count[b])))
    return rows


def union_frame(phase1, outcomes):
    rows = [(outcome, f.kind, f.code_a, f.code_b or '')
            for outcome in outcomes
            for f in phase1.union(outcome)]
    return pd.DataFrame(rows, columns=['outcome', 'kind', 'code_a',
                                       'code_b'])


def _write(frame, out_dir, name, index=False):
    path = os.path.join(out_dir, name)
    frame.to_csv(path, index=index, lineterminator="\n",
                 float_format=FLOAT_FORMAT)
    return path


def sha256(path):
    h = hashlib.sha256()
    with open(path, 'rb') as fp:
        for block in iter(lambda: fp.read(1 << 16), b''):
            h.update(block)
    return h.hexdigest()


def write_manifest(paths, out_dir):
    lines = ["%s  %s\n" % (sha256(p), os.path.relpath(p, out_dir)
                           .replace(os.sep, '/'))
             for p in sorted(paths)]
    path = os.path.join(out_dir, MANIFEST)
    with open(path, 'w', newline='\n') as fp:
        fp.writelines(lines)
    return path


def emit_reports(phase1, phase2, out_dir, clusters=None,
                 render_figures=None):
    """Write every report for a finished run; return the paths written.

    ``clusters`` is a ``code -> cluster_label`` map (or a path to one).
    """
    config = PipelineConfig.loads(phase2.config)
    if clusters is None or isinstance(clusters, str):
        clusters = load_cluster_map(clusters)
    if render_figures is None:
        render_figures = config.render_figures
    try:
        if not os.path.exists(out_dir):
            os.makedirs(out_dir)
        probe = os.path.join(out_dir, MANIFEST)
        with open(probe, 'a'):
            pass
    except (IOError, OSError) as e:
        raise PipelineError("cannot write reports to '%s': %s"
                            % (out_dir, e))

    outcomes = config.outcomes
    aucs1 = phase1.aucs.copy()
    aucs1.insert(1, 'feature_class', CLINICAL)
    scenarios = pd.DataFrame(list(phase2.scenarios.items()),
                             columns=['scenario', 'probability'])
    calibration = pd.DataFrame(
        calibration_frame(phase2.calibration),
        columns=['outcome', 'feature_class', 'bin', 'mean_pred', 'obs_frac',
                 'count'])
    by_algorithm = pd.DataFrame(
        calibration_frame(phase2.curves),
        columns=['outcome', 'feature_class', 'algorithm', 'bin',
                 'mean_pred', 'obs_frac', 'count'])

    paths = [
        _write(table1(phase2), out_dir, "table1.csv"),
        _write(aucs1, out_dir, "auc_phase1.csv"),
        _write(phase2.aucs, out_dir, "auc_phase2.csv"),
        _write(phase1.ranking_table(), out_dir, "algorithm_ranking.csv"),
        _write(calibration, out_dir, "calibration.csv"),
        _write(by_algorithm, out_dir, "calibration_by_algorithm.csv"),
        _write(scenarios, out_dir, "scenarios.csv"),
        _write(phase2.summary, out_dir, "cohort_summary.csv", index=True),
        _write(phase2.strata, out_dir, "cohort_strata.csv"),
        _write(influence_frame(phase2.influence, clusters), out_dir,
               "influence.csv"),
        _write(top_features(phase2.influence, outcomes, clusters), out_dir,
               "top_features.csv"),
        _write(nonzero_influence_counts(phase2.influence), out_dir,
               "influence_counts.csv"),
        _write(phase1.composition(), out_dir, "union.csv"),
        _write(union_frame(phase1, outcomes), out_dir,
               "union_features.csv"),
        _write(phase1.msmr_counts, out_dir, "msmr_counts.csv"),
    ]
    if render_figures:
        from . import plots
        paths.extend(plots.render_all(phase1, phase2,
                                      os.path.join(out_dir, 'figures')))
    paths.append(write_manifest(paths, out_dir))
    log("Wrote %d report files to %s" % (len(paths), out_dir))
    return paths
