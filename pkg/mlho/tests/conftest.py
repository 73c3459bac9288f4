import io

import numpy as np
import pytest

from mlho import config as mlho_config
from mlho.cohort import (
    Cohort, Demographics, OUTCOMES, OutcomeLabels, PatientTimeline,
    ingest_events)
from mlho.settings import PipelineConfig
from mlho.synth import GeneratorSpec, generate_cohort


@pytest.fixture(autouse=True)
def quiet():
    old = mlho_config.log_experiments
    mlho_config.log_experiments = False
    yield
    mlho_config.log_experiments = old


@pytest.fixture
def rng():
    return np.random.RandomState(9)


def make_patient(pid, events=(), age=50, gender='F', race='white',
                 ethnicity='non-hispanic', index_date='2020-04-01',
                 **outcome_dates):
    """Timeline, demographics and labels for one hand-made patient."""
    timeline = PatientTimeline(pid, [c for c, _ in events],
                               [d for _, d in events])
    demo = Demographics(pid, age, gender, race, ethnicity)
    labels = OutcomeLabels(pid, index_date, {
        o: outcome_dates.get(o) for o in OUTCOMES})
    return timeline, demo, labels


def make_cohort(patients):
    timelines, demos, labels = {}, {}, {}
    for tl, demo, lbl in patients:
        timelines[tl.patient_id] = tl
        demos[tl.patient_id] = demo
        labels[tl.patient_id] = lbl
    return Cohort(timelines, demos, labels)


def ingest_text(events, demographics, outcomes):
    return ingest_events(io.StringIO(events), io.StringIO(demographics),
                         io.StringIO(outcomes))


def random_cohort(rng, n_patients, n_codes, tie_rate=0.3, n_days=30):
    """Random timelines; ``tie_rate`` of events share a day with another."""
    codes = ["K%02d" % i for i in range(n_codes)]
    patients = []
    for i in range(n_patients):
        n_events = rng.randint(0, 2 * n_codes)
        events = []
        for _ in range(n_events):
            if len(events) > 0 and rng.rand() < tie_rate:
                day = events[rng.randint(len(events))][1]
            else:
                day = (np.datetime64('2020-01-01')
                       + np.timedelta64(int(rng.randint(n_days)), 'D'))
            events.append((codes[rng.randint(n_codes)], day))
        patients.append(make_patient("R%03d" % i, events))
    return make_cohort(patients)


def small_spec(**kwargs):
    """A generator setup that runs in a second or two."""
    spec = GeneratorSpec()
    spec.update(n_patients=400, n_codes=40, events_mean=8.,
                n_planted_raw=3, n_planted_seq=2, plant_rate=0.25,
                raw_weight=2.0, seq_weight=2.0, seed=3)
    spec.update(**kwargs)
    return spec


@pytest.fixture
def synth_cohort():
    cohort, truth = generate_cohort(small_spec())
    return cohort, truth


def fast_config(**kwargs):
    """Settings that keep a full pipeline run small."""
    config = PipelineConfig()
    for key, value in [('outcomes', ['hospitalization', 'death']),
                       ('cv_folds_phase1', 3),
                       ('cv_folds_phase2', 3),
                       ('calibration_bins', 5),
                       ('cohort.n_resamples', 2),
                       ('msmr.min_prevalence', 0.01),
                       ('msmr.mi_keep', 200),
                       ('msmr.jmi_budget', 30),
                       ('gbm.n_trees', [20, 40]),
                       ('gbm.shrinkage', [0.1]),
                       ('gbm.max_depth', [2]),
                       ('gbm.min_leaf', 5),
                       ('elastic_net.n_lambdas', 8),
                       ('elastic_net.tol', 1e-7)]:
        config.set(key, value)
    for key, value in kwargs.items():
        config.set(key.replace('__', '.'), value)
    return config.validate()


@pytest.fixture(scope='session')
def pipeline_run():
    """Both phases on the small synthetic cohort with `fast_config`."""
    from mlho.experiments import run_phase1, run_phase2
    cohort, truth = generate_cohort(small_spec())
    config = fast_config()
    phase1 = run_phase1(cohort, config)
    phase2 = run_phase2(cohort, config, phase1)
    return cohort, truth, config, phase1, phase2
