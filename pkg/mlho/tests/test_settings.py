import pickle

import pytest

from mlho.exceptions import ConfigError
from mlho.settings import PipelineConfig


def test_defaults():
    config = PipelineConfig()
    assert config.cv_folds_phase1 == 10
    assert config.cv_folds_phase2 == 5
    assert config.union_mode == 'per-outcome'
    assert config.msmr.max_pairs is None
    assert config.cohort.buffer_days == 14
    assert config.synth.n_patients == 5000
    assert config.get('gbm.n_trees') == [100, 300]


def test_dumps_loads_roundtrip():
    config = PipelineConfig(seed=7, outcomes=['death'])
    config.set('msmr.max_pairs', 10 ** 6)
    config.set('gbm.shrinkage', [0.01, 0.2])
    config.set('render_figures', True)
    text = config.dumps()
    assert "seed=7\n" in text
    assert "msmr.max_pairs=1000000\n" in text
    assert "gbm.shrinkage=0.01,0.2\n" in text
    assert "render_figures=true\n" in text
    back = PipelineConfig.loads(text)
    assert back == config
    assert back.dumps() == text


def test_loads_skips_comments_and_parses_values():
    config = PipelineConfig.loads(
        "# a run\n\nseed = 3\noutcomes=hospitalization, icu\n"
        "msmr.max_pairs=none\ncohort.stratify=false\n"
        "msmr.min_prevalence=0.01\n")
    assert config.seed == 3
    assert config.outcomes == ['hospitalization', 'icu']
    assert config.msmr.max_pairs is None
    assert config.cohort.stratify is False
    assert config.msmr.min_prevalence == 0.01


def test_unknown_key():
    with pytest.raises(ConfigError, match="Unknown configuration key"):
        PipelineConfig.loads("msmr.budget=4\n")
    with pytest.raises(ConfigError, match="Unknown configuration key"):
        PipelineConfig().set('nothing', 1)


def test_bad_values():
    with pytest.raises(ConfigError, match="line 2"):
        PipelineConfig.loads("seed=1\njobs=many\n")
    with pytest.raises(ConfigError, match="line 1"):
        PipelineConfig.loads("seed\n")
    with pytest.raises(ConfigError, match="cv_folds_phase1"):
        PipelineConfig().set('cv_folds_phase1', 1)
    with pytest.raises(ConfigError):
        PipelineConfig().set('cohort.test_fraction', 1.)
    with pytest.raises(ConfigError):
        PipelineConfig.loads("render_figures=yes\n")
    with pytest.raises(ConfigError):
        PipelineConfig().set('gbm.n_trees', [])


def test_validate_cross_field():
    with pytest.raises(ConfigError, match="outcomes"):
        PipelineConfig(outcomes=['covid']).validate()
    with pytest.raises(ConfigError, match="learners"):
        PipelineConfig(learners=['gbm', 'gbm']).validate()
    with pytest.raises(ConfigError, match="union_mode"):
        PipelineConfig(union_mode='all').validate()
    with pytest.raises(ConfigError, match="n_top_algorithms"):
        PipelineConfig(learners=['gbm'], n_top_algorithms=2).validate()
    with pytest.raises(ConfigError, match="calibration_scheme"):
        PipelineConfig.loads("calibration_scheme=log\n")


def test_groups_cannot_be_replaced():
    config = PipelineConfig()
    with pytest.raises(AttributeError):
        config.msmr = None
    config.seed = 4
    assert config.get('seed') == 4


def test_file_roundtrip(tmp_path):
    config = PipelineConfig(jobs=3)
    path = str(tmp_path / 'config.txt')
    config.save(path)
    assert PipelineConfig.from_file(path) == config
    with pytest.raises(ConfigError, match="Cannot read"):
        PipelineConfig.from_file(str(tmp_path / 'missing.txt'))


def test_pickle():
    config = PipelineConfig(seed=11)
    config.set('elastic_net.alpha', 1)
    back = pickle.loads(pickle.dumps(config))
    assert back == config
    assert back.elastic_net.alpha == 1.
