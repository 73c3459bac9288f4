"""Longitudinal patient cohorts.

A `Cohort` bundles, for the same set of patients, a `PatientTimeline` of
coded clinical events, `Demographics`, and `OutcomeLabels`. Cohorts are
built once (by `ingest_events` or `mlho.synth.generate_cohort`) and then
only ever read; every operation here returns a new cohort.
"""
import os
import warnings
from collections import namedtuple

import numpy as np
import pandas as pd

from .exceptions import DataError

OUTCOMES = ('hospitalization', 'icu', 'ventilation', 'death')
OUTCOME_COLUMNS = {'hospitalization': 'hosp',
                   'icu': 'icu',
                   'ventilation': 'vent',
                   'death': 'death'}
SCENARIO_STEPS = {'hospitalization': 'Hospitalized',
                  'icu': 'ICU',
                  'ventilation': 'Ventilation',
                  'death': 'Died'}
CATEGORICAL = ('gender', 'race', 'ethnicity')

EVENT_COLUMNS = ('patient_id', 'code', 'date')
DEMO_COLUMNS = ('patient_id', 'age', 'gender', 'race', 'ethnicity')
OUTCOME_FILE_COLUMNS = ('patient_id', 'index_date') + tuple(
    c for o in OUTCOMES
    for c in (OUTCOME_COLUMNS[o], "%s_date" % OUTCOME_COLUMNS[o]))

EVENTS_FILE = "events.csv"
DEMO_FILE = "demographics.csv"
OUTCOMES_FILE = "outcomes.csv"

MAX_AGE = 130

ClinicalEvent = namedtuple('ClinicalEvent', ['patient_id', 'code', 'date'])
Demographics = namedtuple(
    'Demographics', ['patient_id', 'age', 'gender', 'race', 'ethnicity'])


def to_day(value):
    return np.datetime64(value, 'D')


class PatientTimeline(object):
    """Time-ordered coded events for one patient.

    Same-day events keep their input order.
    """

    def __init__(self, patient_id, codes=(), dates=()):
        codes = tuple(codes)
        dates = np.asarray(dates, dtype='datetime64[D]').reshape(-1)
        assert len(codes) == dates.size
        order = np.argsort(dates, kind='stable')
        self.patient_id = patient_id
        self.codes = tuple(codes[i] for i in order)
        self.dates = dates[order]

        self.first_occurrence = {}
        self.occurrence_count = {}
        for code, date in zip(self.codes, self.dates):
            if code not in self.first_occurrence:
                self.first_occurrence[code] = date
            self.occurrence_count[code] = (
                self.occurrence_count.get(code, 0) + 1)

    def __len__(self):
        return len(self.codes)

    @property
    def events(self):
        return [ClinicalEvent(self.patient_id, c, d)
                for c, d in zip(self.codes, self.dates)]

    def until(self, cutoff, inclusive=True):
        """Events dated on or before ``cutoff`` (strictly before if not
        ``inclusive``)."""
        keep = self.dates <= cutoff if inclusive else self.dates < cutoff
        return PatientTimeline(
            self.patient_id,
            [c for c, k in zip(self.codes, keep) if k],
            self.dates[keep])


class OutcomeLabels(object):
    """Binary outcomes for one patient, with the date each one happened."""

    def __init__(self, patient_id, index_date, event_dates):
        self.patient_id = patient_id
        self.index_date = to_day(index_date)
        self.event_dates = {}
        for outcome in OUTCOMES:
            date = event_dates.get(outcome)
            if date is not None:
                date = to_day(date)
                if date < self.index_date:
                    raise DataError(
                        "%s date %s precedes index date %s"
                        % (outcome, date, self.index_date),
                        patient_id=patient_id)
            self.event_dates[outcome] = date

    def label(self, outcome):
        return int(self.event_dates[outcome] is not None)

    def event_date(self, outcome):
        return self.event_dates[outcome]

    @property
    def positives(self):
        return [o for o in OUTCOMES if self.event_dates[o] is not None]


class Cohort(object):
    """Timelines, demographics and outcomes for one patient-id set.

    Patients are kept in ``patient_ids`` order (sorted unless an explicit
    ``order`` is given); every per-patient array returned by a cohort
    follows that order.
    """

    def __init__(self, timelines, demographics, outcomes,
                 buffer_days=None, order=None):
        ids = sorted(outcomes) if order is None else list(order)
        id_set = set(ids)
        if len(id_set) != len(ids) or id_set != set(outcomes):
            raise DataError("patient order does not match outcome records")
        missing = sorted(id_set - set(demographics))
        if len(missing) > 0:
            raise DataError("patients missing demographics: %s"
                            % ", ".join(missing[:10]),
                            patient_id=missing[0])
        self.patient_ids = tuple(ids)
        self.timelines = {pid: timelines.get(pid, PatientTimeline(pid))
                          for pid in ids}
        self.demographics = {pid: demographics[pid] for pid in ids}
        self.outcomes = {pid: outcomes[pid] for pid in ids}
        self.buffer_days = buffer_days

    def __len__(self):
        return len(self.patient_ids)

    @property
    def levels(self):
        """Sorted categorical levels observed for each demographic field."""
        return {col: tuple(sorted({getattr(d, col)
                                   for d in self.demographics.values()}))
                for col in CATEGORICAL}

    @property
    def codes(self):
        """Sorted distinct codes over all timelines."""
        codes = set()
        for tl in self.timelines.values():
            codes.update(tl.occurrence_count)
        return sorted(codes)

    def labels(self, outcome):
        return np.array([self.outcomes[pid].label(outcome)
                         for pid in self.patient_ids], dtype=np.int8)

    def ages(self):
        return np.array([self.demographics[pid].age
                         for pid in self.patient_ids], dtype=float)

    def restrict(self, patient_ids):
        """Sub-cohort of ``patient_ids``, in that order."""
        return Cohort({pid: self.timelines[pid] for pid in patient_ids},
                      self.demographics,
                      {pid: self.outcomes[pid] for pid in patient_ids},
                      buffer_days=self.buffer_days,
                      order=patient_ids)

    def with_timelines(self, timelines, buffer_days=None):
        return Cohort(timelines, self.demographics, self.outcomes,
                      buffer_days=buffer_days, order=self.patient_ids)


# ##############
# Ingestion
# ##############

def _read_table(stream, columns, name):
    try:
        df = pd.read_csv(stream, dtype=str, keep_default_na=False,
                         na_filter=False, skip_blank_lines=False)
    except pd.errors.EmptyDataError:
        return pd.DataFrame({c: [] for c in columns}, dtype=str)
    except pd.errors.ParserError as e:
        raise DataError("malformed %s file: %s" % (name, e))
    unknown = [c for c in df.columns if c not in columns]
    if len(unknown) > 0:
        raise DataError("%s file has unknown columns: %s"
                        % (name, ", ".join(str(c) for c in unknown)), line=1)
    missing = [c for c in columns if c not in df.columns]
    if len(missing) > 0:
        raise DataError("%s file lacks columns: %s"
                        % (name, ", ".join(missing)), line=1)
    df = df[list(columns)].fillna('')
    for col in columns:
        df[col] = df[col].astype(str).str.strip()
    return df


def _first_bad(mask):
    return int(np.flatnonzero(np.asarray(mask))[0])


def _require(df, col, name):
    empty = (df[col] == '').values
    if empty.any():
        i = _first_bad(empty)
        raise DataError("malformed %s row: empty %s" % (name, col), line=i + 2)


def _parse_dates(values, what, allow_empty=False):
    values = pd.Series(values, dtype=str).reset_index(drop=True)
    parsed = pd.to_datetime(values, format='%Y-%m-%d', errors='coerce')
    bad = parsed.isna().values
    if allow_empty:
        bad &= (values != '').values
    if bad.any():
        i = _first_bad(bad)
        raise DataError("invalid %s %r" % (what, values[i]), line=i + 2)
    return parsed.values.astype('datetime64[D]')


def _check_unique(df, name):
    dup = df['patient_id'].duplicated().values
    if dup.any():
        i = _first_bad(dup)
        raise DataError("duplicate patient %r in %s file"
                        % (df['patient_id'].iloc[i], name),
                        line=i + 2, patient_id=df['patient_id'].iloc[i])


def _parse_outcomes(df):
    _require(df, 'patient_id', "outcomes")
    _check_unique(df, "outcomes")
    index_dates = _parse_dates(df['index_date'], "index_date")
    outcomes = {}
    flags = {}
    dates = {}
    for outcome in OUTCOMES:
        col = OUTCOME_COLUMNS[outcome]
        bad = ~df[col].isin(['0', '1']).values
        if bad.any():
            i = _first_bad(bad)
            raise DataError("%s must be 0 or 1, got %r"
                            % (col, df[col].iloc[i]), line=i + 2)
        flags[outcome] = (df[col] == '1').values
        dates[outcome] = _parse_dates(
            df["%s_date" % col], "%s_date" % col, allow_empty=True)
        has_date = ~np.isnat(dates[outcome])
        bad = flags[outcome] != has_date
        if bad.any():
            i = _first_bad(bad)
            raise DataError("%s=%s inconsistent with %s_date %r"
                            % (col, df[col].iloc[i], col,
                               df["%s_date" % col].iloc[i]), line=i + 2)

    for i, pid in enumerate(df['patient_id']):
        event_dates = {o: dates[o][i] if flags[o][i] else None
                       for o in OUTCOMES}
        try:
            outcomes[pid] = OutcomeLabels(pid, index_dates[i], event_dates)
        except DataError as e:
            raise DataError(str(e), line=i + 2, patient_id=pid)
    return outcomes


def _parse_demographics(df, known):
    _require(df, 'patient_id', "demographics")
    _check_unique(df, "demographics")
    ages = pd.to_numeric(df['age'], errors='coerce').values
    bad = (np.isnan(ages) | (ages != np.round(ages))
           | (ages < 0) | (ages > MAX_AGE))
    if bad.any():
        i = _first_bad(bad)
        raise DataError("age must be an integer in [0, %d], got %r"
                        % (MAX_AGE, df['age'].iloc[i]), line=i + 2)
    for col in CATEGORICAL:
        _require(df, col, "demographics")

    demographics = {}
    n_unknown = 0
    for i, row in enumerate(df.itertuples(index=False)):
        if row.patient_id not in known:
            n_unknown += 1
            continue
        demographics[row.patient_id] = Demographics(
            row.patient_id, int(ages[i]), row.gender, row.race, row.ethnicity)
    if n_unknown > 0:
        warnings.warn("%d demographics rows for patients without outcomes "
                      "were rejected" % n_unknown)
    return demographics


def _parse_events(df, known):
    _require(df, 'patient_id', "events")
    _require(df, 'code', "events")
    dates = _parse_dates(df['date'], "event date")
    unknown = ~df['patient_id'].isin(known).values
    if unknown.any():
        warnings.warn("%d event rows for patients without outcomes "
                      "were rejected" % int(unknown.sum()))
    codes = df['code'].values
    timelines = {}
    groups = df.loc[~unknown].groupby('patient_id', sort=False).indices
    for pid, rows in groups.items():
        rows = np.flatnonzero(~unknown)[rows]
        timelines[pid] = PatientTimeline(pid, codes[rows], dates[rows])
    return timelines


def ingest_events(event_stream, demo_stream, outcome_stream):
    """Build a `Cohort` from the three delimited input files.

    Each argument is a path or an open text stream. Outcomes define the
    patient set; event and demographic rows for other patients are
    rejected with a warning. Malformed rows raise `DataError` naming the
    line number.
    """
    outcomes = _parse_outcomes(
        _read_table(outcome_stream, OUTCOME_FILE_COLUMNS, "outcomes"))
    known = set(outcomes)
    demographics = _parse_demographics(
        _read_table(demo_stream, DEMO_COLUMNS, "demographics"), known)
    timelines = _parse_events(
        _read_table(event_stream, EVENT_COLUMNS, "events"), known)
    return Cohort(timelines, demographics, outcomes)


def read_cohort(data_dir):
    paths = [os.path.join(data_dir, f)
             for f in (EVENTS_FILE, DEMO_FILE, OUTCOMES_FILE)]
    missing = [p for p in paths if not os.path.isfile(p)]
    if len(missing) > 0:
        raise DataError("missing cohort files: %s" % ", ".join(missing))
    return ingest_events(*paths)


def _fmt_date(date):
    return "" if date is None else str(to_day(date))


def write_cohort(cohort, out_dir):
    """Write the three input files for ``cohort`` into ``out_dir``."""
    if not os.path.exists(out_dir):
        os.makedirs(out_dir)
    events = [(pid, code, _fmt_date(date))
              for pid in cohort.patient_ids
              for code, date in zip(cohort.timelines[pid].codes,
                                    cohort.timelines[pid].dates)]
    demo = [tuple(cohort.demographics[pid]) for pid in cohort.patient_ids]
    outcomes = []
    for pid in cohort.patient_ids:
        lbl = cohort.outcomes[pid]
        row = [pid, _fmt_date(lbl.index_date)]
        for outcome in OUTCOMES:
            row.extend([str(lbl.label(outcome)),
                        _fmt_date(lbl.event_date(outcome))])
        outcomes.append(row)

    paths = []
    for fname, rows, columns in [(EVENTS_FILE, events, EVENT_COLUMNS),
                                 (DEMO_FILE, demo, DEMO_COLUMNS),
                                 (OUTCOMES_FILE, outcomes,
                                  OUTCOME_FILE_COLUMNS)]:
        path = os.path.join(out_dir, fname)
        pd.DataFrame(rows, columns=list(columns)).to_csv(
            path, index=False, lineterminator="\n")
        paths.append(path)
    return paths


# ################
# Cohort operations
# ################

def apply_temporal_buffer(cohort, buffer_days, inclusive=True):
    """Drop events later than ``index_date - buffer_days``.

    Events dated exactly on the cutoff are kept when ``inclusive``.
    Patients left without events stay in the cohort.
    """
    if buffer_days < 0:
        raise ValueError("buffer_days must be non-negative")
    delta = np.timedelta64(int(buffer_days), 'D')
    timelines = {}
    for pid in cohort.patient_ids:
        cutoff = cohort.outcomes[pid].index_date - delta
        timelines[pid] = cohort.timelines[pid].until(cutoff, inclusive)
    return cohort.with_timelines(timelines, buffer_days=buffer_days)


def scenario(labels):
    """Canonical scenario string for one patient's `OutcomeLabels`.

    Returns None when event dates contradict the severity chain
    (e.g. ICU before hospitalization).
    """
    positives = labels.positives
    if len(positives) == 0:
        return "None"
    dates = [labels.event_date(o) for o in positives]
    # positives follow chain order; dates must not go backwards
    if any(later < earlier for earlier, later in zip(dates, dates[1:])):
        return None
    steps = [SCENARIO_STEPS[o] for o in positives]
    if 'death' not in positives:
        steps.append("Discharged")
    return "→".join(steps)


def scenario_probabilities(cohort):
    """Probability of each sequential outcome scenario.

    Returns a dict ordered by decreasing probability (ties by name).
    Patients whose outcome dates break the chain order are excluded
    with a warning.
    """
    counts = {}
    n_excluded = 0
    for pid in cohort.patient_ids:
        s = scenario(cohort.outcomes[pid])
        if s is None:
            n_excluded += 1
            continue
        counts[s] = counts.get(s, 0) + 1
    if n_excluded > 0:
        warnings.warn("%d patients excluded from scenario table: outcome "
                      "dates out of chain order" % n_excluded)
    total = sum(counts.values())
    if total == 0:
        raise DataError("no patients with a consistent outcome scenario")
    keys = sorted(counts, key=lambda k: (-counts[k], k))
    return {k: counts[k] / float(total) for k in keys}


def cohort_summary(cohort):
    """Counts, rates, and mean age per outcome.

    Rows are ``'cohort'`` plus one per outcome; ``mean_age`` is NaN for
    a stratum with no members. The mortality rate is
    ``summary.loc['death', 'rate']``.
    """
    if len(cohort) == 0:
        raise DataError("cannot summarize an empty cohort")
    ages = cohort.ages()
    rows = [('cohort', len(cohort), 1.0, ages.mean())]
    for outcome in OUTCOMES:
        y = cohort.labels(outcome).astype(bool)
        mean_age = ages[y].mean() if y.any() else np.nan
        rows.append((outcome, int(y.sum()), y.mean(), mean_age))
    return pd.DataFrame(rows, columns=['stratum', 'n', 'rate', 'mean_age']
                        ).set_index('stratum')


def stratified_summary(cohort):
    """Outcome rates within each demographic level."""
    rows = []
    labels = {o: cohort.labels(o) for o in OUTCOMES}
    for col in CATEGORICAL:
        values = np.array([getattr(cohort.demographics[pid], col)
                           for pid in cohort.patient_ids])
        for level in cohort.levels[col]:
            members = values == level
            row = {'variable': col, 'level': level, 'n': int(members.sum())}
            for outcome in OUTCOMES:
                row["%s_rate" % outcome] = labels[outcome][members].mean()
            rows.append(row)
    return pd.DataFrame(
        rows, columns=['variable', 'level', 'n'] + [
            "%s_rate" % o for o in OUTCOMES])


def _allocate(sizes, n_take):
    """Largest-remainder apportionment of ``n_take`` over ``sizes``."""
    sizes = np.asarray(sizes, dtype=float)
    quota = sizes * n_take / sizes.sum()
    take = np.floor(quota).astype(int)
    short = n_take - take.sum()
    order = np.lexsort((np.arange(sizes.size), -(quota - take)))
    take[order[:short]] += 1
    return take


def _cover_outcomes(patterns, sizes, take, columns):
    """Move test slots so each outcome with 2+ positives gets at least one.

    Rarest outcome first; the slot comes from the stratum with the most
    test slots among those without that outcome.
    """
    take = take.copy()
    positives = {j: sizes[patterns[:, j] == 1].sum() for j in columns}
    for j in sorted(columns, key=lambda j: (positives[j], j)):
        has = np.flatnonzero(patterns[:, j] == 1)
        if positives[j] < 2 or take[has].sum() > 0:
            continue
        donors = np.flatnonzero((patterns[:, j] == 0) & (take > 0))
        if donors.size == 0:
            continue
        donor = donors[np.argmax(take[donors])]
        receiver = has[np.argmax(sizes[has])]
        take[donor] -= 1
        take[receiver] += 1
    return take


def split_train_test(cohort, test_fraction, seed,
                     stratify=True, outcomes=OUTCOMES):
    """Deterministic train/test partition of ``cohort``.

    With ``stratify``, patients are grouped by their joint outcome
    pattern and each group is split in proportion. Slots are then moved
    so every outcome with two or more positives has one on each side.
    """
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must be in (0, 1)")
    ids = np.array(cohort.patient_ids, dtype=object)
    n = ids.size
    n_test = int(np.floor(test_fraction * n + 0.5))
    if n_test < 1 or n_test >= n:
        raise DataError("cohort of %d patients too small for a %.2f split"
                        % (n, test_fraction))
    rng = np.random.RandomState(seed)
    labels = np.column_stack([cohort.labels(o) for o in OUTCOMES])

    if stratify:
        patterns, strata = np.unique(labels, axis=0, return_inverse=True)
        strata = strata.reshape(-1)
        members = [np.flatnonzero(strata == s) for s in range(len(patterns))]
        sizes = np.array([m.size for m in members])
        take = _allocate(sizes, n_test)
        take = _cover_outcomes(
            patterns, sizes, take,
            [j for j, o in enumerate(OUTCOMES) if o in outcomes])
        test_ix = np.concatenate(
            [rng.permutation(m)[:t] for m, t in zip(members, take)])
    else:
        test_ix = rng.permutation(n)[:n_test]

    is_test = np.zeros(n, dtype=bool)
    is_test[test_ix] = True
    for j, outcome in enumerate(OUTCOMES):
        if outcome not in outcomes or not labels[:, j].any():
            continue
        for side, mask in (("train", ~is_test), ("test", is_test)):
            if not labels[mask, j].any():
                raise DataError(
                    "cohort too small: no %s positives on the %s side"
                    % (outcome, side))
    return (cohort.restrict(list(ids[~is_test])),
            cohort.restrict(list(ids[is_test])))
