import os

import pandas as pd
import pytest

from mlho.exceptions import DataError, PipelineError
from mlho.reports import (
    MANIFEST, cluster_label, emit_reports, influence_frame,
    load_cluster_map, sha256, top_features)
from mlho.tspm import DEMOGRAPHIC, RAW, SEQUENCE, FeatureDescriptor

REPORT_FILES = [
    'algorithm_ranking.csv', 'auc_phase1.csv', 'auc_phase2.csv',
    'calibration.csv', 'calibration_by_algorithm.csv', 'cohort_strata.csv',
    'cohort_summary.csv', 'influence.csv', 'influence_counts.csv',
    'msmr_counts.csv', 'scenarios.csv', 'table1.csv', 'top_features.csv',
    'union.csv', 'union_features.csv']


def read_manifest(out):
    with open(os.path.join(out, MANIFEST)) as fp:
        return fp.read()


def test_report_files(tmp_path, pipeline_run):
    _, _, config, phase1, phase2 = pipeline_run
    out = str(tmp_path / 'reports')
    paths = emit_reports(phase1, phase2, out)
    assert sorted(os.path.basename(p) for p in paths) == sorted(
        REPORT_FILES + [MANIFEST])

    table1 = pd.read_csv(os.path.join(out, 'table1.csv'))
    assert list(table1.columns) == ['outcome', 'feature_class', 'mean_auc',
                                    'ci_lower', 'ci_upper', 'n_models',
                                    'auc_ci']
    assert len(table1) == len(config.outcomes) * 3

    auc1 = pd.read_csv(os.path.join(out, 'auc_phase1.csv'))
    assert list(auc1.columns) == ['outcome', 'feature_class', 'iteration',
                                  'algorithm', 'auc']
    assert set(auc1['feature_class']) == {'clinical'}

    scenarios = pd.read_csv(os.path.join(out, 'scenarios.csv'))
    assert scenarios['probability'].sum() == pytest.approx(1., abs=1e-5)

    influence = pd.read_csv(os.path.join(out, 'influence.csv'),
                            keep_default_na=False)
    assert list(influence.columns) == ['outcome', 'feature_class', 'rank',
                                       'kind', 'feature', 'cluster_label',
                                       'influence']

    manifest = read_manifest(out).splitlines()
    assert len(manifest) == len(REPORT_FILES)
    for line in manifest:
        digest, name = line.split('  ')
        assert sha256(os.path.join(out, name)) == digest


def test_reports_are_byte_identical(tmp_path, pipeline_run):
    _, _, _, phase1, phase2 = pipeline_run
    a, b = str(tmp_path / 'a'), str(tmp_path / 'b')
    emit_reports(phase1, phase2, a)
    emit_reports(phase1, phase2, b)
    assert read_manifest(a) == read_manifest(b)


def test_figures_join_the_manifest(tmp_path, pipeline_run):
    _, _, _, phase1, phase2 = pipeline_run
    out = str(tmp_path / 'figs')
    paths = emit_reports(phase1, phase2, out, render_figures=True)
    figures = [p for p in paths if os.sep + 'figures' + os.sep in p]
    assert len(figures) > 0
    assert all(p.endswith('.svg') for p in figures)
    assert "figures/" in read_manifest(out)


def test_unwritable_directory(tmp_path, pipeline_run):
    _, _, _, phase1, phase2 = pipeline_run
    blocker = tmp_path / 'file'
    blocker.write_text(u"not a directory")
    with pytest.raises(PipelineError, match="cannot write reports"):
        emit_reports(phase1, phase2, str(blocker / 'reports'))


def test_cluster_map(tmp_path):
    path = tmp_path / 'clusters.csv'
    path.write_text(u"code,cluster_label\nI50,Cardiovascular disease\n"
                    u"J96, Respiratory failure \n")
    clusters = load_cluster_map(str(path))
    assert clusters == {'I50': 'Cardiovascular disease',
                        'J96': 'Respiratory failure'}

    empty = tmp_path / 'empty.csv'
    empty.write_text(u"")
    assert load_cluster_map(str(empty)) == {}
    assert load_cluster_map(None) == {}

    bad = tmp_path / 'bad.csv'
    bad.write_text(u"code,label\nI50,x\n")
    with pytest.raises(DataError, match="cluster_label"):
        load_cluster_map(str(bad))
    with pytest.raises(DataError, match="does not exist"):
        load_cluster_map(str(tmp_path / 'missing.csv'))


def test_cluster_labels_in_influence_rows():
    clusters = {'I50': 'Cardiovascular disease', 'J96': 'Respiratory failure'}
    heart = FeatureDescriptor(RAW, 'I50')
    seq = FeatureDescriptor(SEQUENCE, 'I50', 'J96')
    other = FeatureDescriptor(RAW, 'Z00')
    age = FeatureDescriptor(DEMOGRAPHIC, 'age')
    assert cluster_label(heart, clusters) == 'Cardiovascular disease'
    assert cluster_label(seq, clusters) == (
        'Cardiovascular disease->Respiratory failure')
    assert cluster_label(other, clusters) == ''
    assert cluster_label(age, clusters) == ''

    influence = {('death', 'combined'): {age: 100., heart: 60., other: 5.}}
    frame = influence_frame(influence, clusters)
    assert frame['feature'].tolist() == ['age', 'I50', 'Z00']
    assert frame['rank'].tolist() == [1, 2, 3]
    assert frame['cluster_label'].tolist()[1] == 'Cardiovascular disease'

    top = top_features(influence, ['death', 'icu'], clusters, n=1)
    assert top[['outcome', 'feature']].values.tolist() == [['death', 'I50']]


def test_emit_reports_with_cluster_file(tmp_path, pipeline_run):
    _, _, _, phase1, phase2 = pipeline_run
    codes = sorted({f.code_a for f in phase1.union()})
    path = tmp_path / 'clusters.csv'
    path.write_text(u"code,cluster_label\n"
                    + u"".join(u"%s,group-%s\n" % (c, c) for c in codes))
    out = str(tmp_path / 'reports')
    emit_reports(phase1, phase2, out, clusters=str(path))
    influence = pd.read_csv(os.path.join(out, 'influence.csv'),
                            keep_default_na=False)
    clinical = influence[influence['kind'] == RAW]
    assert len(clinical) > 0
    assert all(label == 'group-' + feature for feature, label in
               zip(clinical['feature'], clinical['cluster_label']))
