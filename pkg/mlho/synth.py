"""Synthetic cohorts with known ground truth.

Outcomes follow the severity chain hospitalization -> ICU -> ventilation,
with death possible at every hospitalized stage. Each step's probability
is a logistic function of the patient's planted codes, planted code
orderings, age and gender, so every predictive feature is known.
"""
import os

import numpy as np
import pandas as pd
from nengo.utils.stdlib import Timer

from . import params, parallel
from .cohort import (
    Cohort, Demographics, OUTCOMES, OutcomeLabels, PatientTimeline,
    write_cohort)
from .exceptions import ConfigError
from .params import ParamsObject
from .tspm import DEMOGRAPHIC, RAW, SEQUENCE
from .utils import derive_seed, log

GROUND_TRUTH_FILE = "ground_truth.txt"
TRUE_PROBS_FILE = "true_probs.txt"

RACES = ('asian', 'black', 'other', 'white')
RACE_P = (0.07, 0.10, 0.13, 0.70)
ETHNICITIES = ('hispanic', 'non-hispanic')
ETHNICITY_P = (0.2, 0.8)


def logit(p):
    return np.log(p / (1. - p))


def expit(x):
    return 1. / (1. + np.exp(-x))


class GeneratorSpec(ParamsObject):
    n_patients = params.IntParam('n_patients', default=5000, low=1)
    n_codes = params.IntParam('n_codes', default=500, low=2)
    events_mean = params.NumberParam('events_mean', default=30., low=0)
    zipf_exponent = params.NumberParam('zipf_exponent', default=1., low=0)
    history_days = params.IntParam('history_days', default=365, low=1)
    buffer_days = params.IntParam('buffer_days', default=14, low=0)

    n_planted_raw = params.IntParam('n_planted_raw', default=10, low=0)
    n_planted_seq = params.IntParam('n_planted_seq', default=5, low=0)
    planted_raw = params.ListParam('planted_raw', default=None,
                                   optional=True)
    planted_sequences = params.ListParam('planted_sequences', default=None,
                                         optional=True)
    plant_rate = params.NumberParam('plant_rate', default=0.15,
                                    low=0, high=1)
    raw_weight = params.NumberParam('raw_weight', default=1.5)
    seq_weight = params.NumberParam('seq_weight', default=1.5)
    # Per outcome, in OUTCOMES order; age weights are per decade from 50
    age_weight = params.ListParam('age_weight', default=[0.3, 0.3, 0.3, 0.9],
                                  item=float)
    gender_weight = params.ListParam('gender_weight',
                                     default=[0.2, 0.2, 0.2, 0.3],
                                     item=float)

    hosp_rate = params.NumberParam('hosp_rate', default=0.27,
                                   low=0, high=1, low_open=True,
                                   high_open=True)
    icu_rate = params.NumberParam('icu_rate', default=0.37, low=0, high=1,
                                  low_open=True, high_open=True)
    vent_rate = params.NumberParam('vent_rate', default=0.45, low=0, high=1,
                                   low_open=True, high_open=True)
    # Death given hospitalization only, given ICU only, given ventilation
    death_rate = params.ListParam('death_rate', default=[0.1, 0.1, 0.4],
                                  item=float)
    seed = params.IntParam('seed', default=0, low=0)

    def codes(self):
        return ["C%04d" % i for i in range(self.n_codes)]


class GroundTruth(object):
    """What the generator planted, and each patient's true probabilities.

    ``planted`` has one row per (feature, outcome) with its log-odds
    weight; ``true_probs`` is indexed by patient id with one marginal
    probability column per outcome.
    """

    def __init__(self, planted, true_probs):
        self.planted = planted
        self.true_probs = true_probs

    def features(self, kinds=(RAW, SEQUENCE)):
        """Planted (kind, code_a, code_b) triples of the given kinds."""
        rows = self.planted[self.planted['kind'].isin(kinds)]
        return sorted({(k, a, b if b != '' else None)
                       for k, a, b in zip(rows['kind'], rows['code_a'],
                                          rows['code_b'])})

    @property
    def none_rate(self):
        """Expected fraction of patients with no adverse outcome."""
        return float((1. - self.true_probs['hospitalization']).mean())

    def save(self, out_dir):
        gt = os.path.join(out_dir, GROUND_TRUTH_FILE)
        probs = os.path.join(out_dir, TRUE_PROBS_FILE)
        self.planted.to_csv(gt, index=False, lineterminator="\n")
        self.true_probs.to_csv(probs, lineterminator="\n",
                               float_format="%.10g")
        return [gt, probs]


def _plan(spec):
    """Planted raw codes, planted (a, b) pairs, and background codes."""
    codes = spec.codes()
    universe = set(codes)
    rng = np.random.RandomState(derive_seed(spec.seed, 'plan'))
    order = [codes[i] for i in rng.permutation(len(codes))]

    if spec.planted_raw is not None:
        raw = list(spec.planted_raw)
    else:
        raw = order[:spec.n_planted_raw]
    if spec.planted_sequences is not None:
        pairs = [tuple(s.split('>', 1)) for s in spec.planted_sequences]
        if any(len(p) != 2 for p in pairs):
            raise ConfigError("planted sequences must look like 'A>B'")
    else:
        rest = [c for c in order if c not in set(raw)]
        pairs = [(rest[2 * i], rest[2 * i + 1])
                 for i in range(spec.n_planted_seq)]

    planted = set(raw) | {c for p in pairs for c in p}
    outside = sorted(planted - universe)
    if len(outside) > 0:
        raise ConfigError("planted codes outside the code universe: %s"
                          % ", ".join(outside))
    if len(planted) != len(raw) + 2 * len(pairs):
        raise ConfigError("planted codes must all be distinct")
    if len(planted) >= len(codes):
        raise ConfigError("no background codes left after planting")
    background = [c for c in codes if c not in planted]
    return raw, pairs, background


def _check(spec):
    for name in ('age_weight', 'gender_weight'):
        if len(getattr(spec, name)) != len(OUTCOMES):
            raise ConfigError("%s needs one weight per outcome" % name)
    if len(spec.death_rate) != 3 or not all(
            0 < p < 1 for p in spec.death_rate):
        raise ConfigError("death_rate needs three probabilities in (0, 1)")
    weights = [spec.raw_weight, spec.seq_weight] + list(
        spec.age_weight) + list(spec.gender_weight)
    if not np.all(np.isfinite(weights)):
        raise ConfigError("effect weights must be finite")


def _chain_probs(spec, eta):
    """Conditional step probabilities given per-outcome log-odds shifts."""
    hosp = expit(logit(spec.hosp_rate) + eta[0])
    icu = expit(logit(spec.icu_rate) + eta[1])
    vent = expit(logit(spec.vent_rate) + eta[2])
    death = [expit(logit(p) + eta[3]) for p in spec.death_rate]
    return hosp, icu, vent, death


def _marginals(hosp, icu, vent, death):
    return (hosp,
            hosp * icu,
            hosp * icu * vent,
            hosp * ((1 - icu) * death[0] + icu * (1 - vent) * death[1]
                    + icu * vent * death[2]))


def _patient(spec, index, raw, pairs, background, bg_p):
    rng = np.random.RandomState(derive_seed(spec.seed, 'patient', index))
    pid = "P%06d" % index

    age = int(np.clip(np.round(rng.normal(51, 18)), 18, 100))
    gender = 'F' if rng.rand() < 0.5 else 'M'
    race = RACES[rng.choice(len(RACES), p=RACE_P)]
    ethnicity = ETHNICITIES[rng.choice(len(ETHNICITIES), p=ETHNICITY_P)]
    demo = Demographics(pid, age, gender, race, ethnicity)

    index_date = (np.datetime64('2020-03-01')
                  + np.timedelta64(int(rng.randint(0, 122)), 'D'))
    last_day = spec.history_days - spec.buffer_days
    first_day = spec.history_days

    def day(lo=0, hi=None):
        """A pre-buffer date, ``lo``..``hi`` days into the history window."""
        hi = last_day if hi is None else hi
        offset = first_day - rng.randint(lo, max(hi, lo + 1))
        return index_date - np.timedelta64(int(offset), 'D')

    n_events = rng.poisson(spec.events_mean)
    codes = [background[i] for i in rng.choice(len(background), n_events,
                                               p=bg_p)]
    dates = [day() for _ in codes]

    eta = np.zeros(len(OUTCOMES))
    for code in raw:
        if rng.rand() < spec.plant_rate:
            for _ in range(1 + rng.poisson(1.)):
                codes.append(code)
                dates.append(day())
            eta += spec.raw_weight
    half = last_day // 2
    for a, b in pairs:
        u = rng.rand()
        if u < spec.plant_rate:
            # a strictly before b: the planted ordering
            codes.extend([a, b])
            dates.extend([day(0, half), day(half + 1)])
            eta += spec.seq_weight
        elif u < 1.5 * spec.plant_rate:
            codes.extend([b, a])
            dates.extend([day(0, half), day(half + 1)])

    eta += np.array(spec.age_weight) * (age - 50) / 10.
    if gender == 'M':
        eta += np.array(spec.gender_weight)

    hosp, icu, vent, death = _chain_probs(spec, eta)
    probs = _marginals(hosp, icu, vent, death)

    events = {}
    d = index_date
    if rng.rand() < hosp:
        d = d + np.timedelta64(int(rng.randint(0, 8)), 'D')
        events['hospitalization'] = d
        stage = 0
        if rng.rand() < icu:
            d = d + np.timedelta64(int(rng.randint(0, 6)), 'D')
            events['icu'] = d
            stage = 1
            if rng.rand() < vent:
                d = d + np.timedelta64(int(rng.randint(0, 4)), 'D')
                events['ventilation'] = d
                stage = 2
        if rng.rand() < death[stage]:
            events['death'] = d + np.timedelta64(int(rng.randint(1, 21)),
                                                 'D')
    labels = OutcomeLabels(pid, index_date, events)
    return PatientTimeline(pid, codes, dates), demo, labels, probs


def _patients(spec, indices, raw, pairs, background, bg_p):
    return [_patient(spec, i, raw, pairs, background, bg_p) for i in indices]


def _planted_table(spec, raw, pairs):
    rows = []
    for code in raw:
        rows.extend((RAW, code, '', o, spec.raw_weight) for o in OUTCOMES)
    for a, b in pairs:
        rows.extend((SEQUENCE, a, b, o, spec.seq_weight) for o in OUTCOMES)
    for j, o in enumerate(OUTCOMES):
        rows.append((DEMOGRAPHIC, 'age', '', o, spec.age_weight[j]))
        rows.append((DEMOGRAPHIC, 'gender=M', '', o, spec.gender_weight[j]))
    return pd.DataFrame(rows, columns=['kind', 'code_a', 'code_b',
                                       'outcome', 'weight'])


def generate_cohort(spec, jobs=None):
    """Draw a `Cohort` and its `GroundTruth` from ``spec``.

    Patients are generated from their own derived seeds, so the result
    does not depend on ``jobs``.
    """
    _check(spec)
    raw, pairs, background = _plan(spec)
    ranks = np.arange(1, len(background) + 1, dtype=float)
    bg_p = ranks ** -spec.zipf_exponent
    bg_p /= bg_p.sum()

    with Timer() as t:
        n_chunks = max(1, jobs or 1)
        bounds = np.linspace(0, spec.n_patients, n_chunks + 1).astype(int)
        results = parallel.run_cells(
            _patients,
            [(k, (spec, range(bounds[k], bounds[k + 1]), raw, pairs,
                  background, bg_p)) for k in range(n_chunks)],
            jobs=jobs)
        patients = [p for k in range(n_chunks) for p in results[k]]
    log("Generated %d synthetic patients in %.3f seconds"
        % (len(patients), t.duration))

    timelines = {tl.patient_id: tl for tl, _, _, _ in patients}
    demographics = {d.patient_id: d for _, d, _, _ in patients}
    outcomes = {lbl.patient_id: lbl for _, _, lbl, _ in patients}
    true_probs = pd.DataFrame(
        [probs for _, _, _, probs in patients], columns=list(OUTCOMES),
        index=pd.Index([d.patient_id for _, d, _, _ in patients],
                       name='patient_id'))
    cohort = Cohort(timelines, demographics, outcomes)
    return cohort, GroundTruth(_planted_table(spec, raw, pairs), true_probs)


def write_synthetic(spec, out_dir, jobs=None):
    """Generate a cohort and write its input and ground-truth files."""
    cohort, truth = generate_cohort(spec, jobs=jobs)
    paths = write_cohort(cohort, out_dir)
    paths.extend(truth.save(out_dir))
    return cohort, truth, paths
