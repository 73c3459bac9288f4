"""Raw and transitive sequential representation mining.

A raw feature counts how often a code occurs in a patient's timeline.
A sequence feature ``A -> B`` is 1 when the first occurrence of ``A`` is
not later than the first occurrence of ``B`` (so same-day first
occurrences set both ``A -> B`` and ``B -> A``).
"""
import struct
from collections import namedtuple

import numpy as np
import pandas as pd
import scipy.sparse

from . import parallel
from .cohort import CATEGORICAL
from .exceptions import ConfigError, DataError, MiningBudgetError

RAW = 'raw'
SEQUENCE = 'sequence'
DEMOGRAPHIC = 'demographic'
KINDS = (RAW, SEQUENCE, DEMOGRAPHIC)

MAGIC = b'MLHO'
FORMAT_VERSION = 1
_KIND_CODES = {RAW: 0, SEQUENCE: 1, DEMOGRAPHIC: 2}


class FeatureDescriptor(namedtuple('FeatureDescriptor',
                                   ['kind', 'code_a', 'code_b'])):
    """Identity of one feature column.

    ``code_b`` is set only for sequence features (``code_a -> code_b``).
    Demographic features use ``code_a`` of ``age`` or ``field=level``.
    """

    __slots__ = ()

    def __new__(cls, kind, code_a, code_b=None):
        if kind not in KINDS:
            raise ValueError("Unknown feature kind '%s'" % kind)
        if (kind == SEQUENCE) != (code_b is not None):
            raise ValueError("code_b must be given iff kind is sequence")
        if kind == SEQUENCE and code_a == code_b:
            raise ValueError("Sequence feature needs two distinct codes")
        return super(FeatureDescriptor, cls).__new__(
            cls, kind, code_a, code_b)

    def codes(self):
        return (self.code_a,) if self.code_b is None else (
            self.code_a, self.code_b)


def describe(feature):
    if feature.kind == SEQUENCE:
        return "%s->%s" % (feature.code_a, feature.code_b)
    return feature.code_a


class SparseFeatureMatrix(object):
    """Patients x features, stored as CSR with sorted column indices.

    Explicit zeros are never stored, so a column's number of stored
    entries is its number of patients with a nonzero value.
    """

    def __init__(self, data, features, patient_ids):
        data = scipy.sparse.csr_matrix(data, dtype=np.float64)
        data.eliminate_zeros()
        data.sort_indices()
        if data.shape != (len(patient_ids), len(features)):
            raise ValueError("Matrix shape %s does not match %d patients x "
                             "%d features" % (data.shape, len(patient_ids),
                                              len(features)))
        self.data = data
        self.features = tuple(features)
        self.patient_ids = tuple(patient_ids)
        self._index = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def n_features(self):
        return len(self.features)

    @property
    def index(self):
        if self._index is None:
            self._index = {f: i for i, f in enumerate(self.features)}
        return self._index

    def rows(self):
        """Yield ``(patient_id, indices, values)`` per patient."""
        d = self.data
        for i, pid in enumerate(self.patient_ids):
            sl = slice(d.indptr[i], d.indptr[i + 1])
            yield pid, d.indices[sl], d.data[sl]

    def nonzero_counts(self):
        return np.asarray(self.data.getnnz(axis=0))

    def prevalence(self):
        n = len(self.patient_ids)
        return self.nonzero_counts() / float(n) if n > 0 else np.zeros(
            self.n_features)

    def binarized(self):
        """CSR of 0/1 presence indicators."""
        b = self.data.copy()
        b.data = np.ones_like(b.data)
        return b

    def kinds(self):
        return np.array([f.kind for f in self.features], dtype=object)

    def select(self, columns):
        """Keep ``columns`` (indices, in the order given)."""
        columns = np.asarray(columns, dtype=int)
        return SparseFeatureMatrix(self.data[:, columns],
                                   [self.features[j] for j in columns],
                                   self.patient_ids)

    def dense(self):
        return self.data.toarray()


def _build_csr(row_cols, row_vals, n_cols):
    indptr = np.zeros(len(row_cols) + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([c.size for c in row_cols])
    if len(row_cols) > 0 and indptr[-1] > 0:
        indices = np.concatenate(row_cols)
        values = np.concatenate(row_vals).astype(np.float64)
    else:
        indices = np.zeros(0, dtype=np.int64)
        values = np.zeros(0)
    return scipy.sparse.csr_matrix(
        (values, indices, indptr), shape=(len(row_cols), n_cols))


# ###########
# Raw mining
# ###########

def mine_raw(cohort, dictionary=None):
    """Occurrence counts per (patient, code).

    The dictionary is every code seen in ``cohort``, sorted; pass
    ``dictionary`` (raw descriptors) to mine onto a fixed one instead.
    """
    if dictionary is None:
        features = [FeatureDescriptor(RAW, c) for c in cohort.codes]
    else:
        features = [f for f in dictionary if f.kind == RAW]
    col = {f.code_a: j for j, f in enumerate(features)}

    row_cols, row_vals = [], []
    for pid in cohort.patient_ids:
        counts = cohort.timelines[pid].occurrence_count
        pairs = sorted((col[c], n) for c, n in counts.items() if c in col)
        row_cols.append(np.array([p[0] for p in pairs], dtype=np.int64))
        row_vals.append(np.array([p[1] for p in pairs], dtype=np.float64))
    return SparseFeatureMatrix(_build_csr(row_cols, row_vals, len(features)),
                               features, cohort.patient_ids)


# ##################
# Transitive mining
# ##################

def patient_pair_keys(first_occurrence, code_index):
    """Sorted pair keys ``a * n_codes + b`` for which ``t_a1 <= t_b1``.

    ``code_index`` maps code to its position in the sorted code list;
    codes not in it are ignored.
    """
    n_codes = len(code_index)
    codes = [c for c in first_occurrence if c in code_index]
    if len(codes) < 2:
        return np.zeros(0, dtype=np.int64)
    ix = np.array([code_index[c] for c in codes], dtype=np.int64)
    t = np.array([first_occurrence[c] for c in codes],
                 dtype='datetime64[D]')
    ordered = np.less_equal.outer(t, t)
    np.fill_diagonal(ordered, False)
    a, b = np.nonzero(ordered)
    return np.sort(ix[a] * n_codes + ix[b])


def _chunk_keys(first_occurrences, code_index):
    return [patient_pair_keys(fo, code_index) for fo in first_occurrences]


def _chunks(seq, n_chunks):
    bounds = np.linspace(0, len(seq), n_chunks + 1).astype(int)
    return [seq[bounds[i]:bounds[i + 1]] for i in range(n_chunks)]


def _mine_keys(cohort, code_index, jobs):
    firsts = [cohort.timelines[pid].first_occurrence
              for pid in cohort.patient_ids]
    n_chunks = max(1, jobs or 1)
    results = parallel.run_cells(
        _chunk_keys,
        [(i, (chunk, code_index))
         for i, chunk in enumerate(_chunks(firsts, n_chunks))],
        jobs=jobs)
    return [keys for i in range(n_chunks) for keys in results[i]]


def _count_keys(per_patient, chunk_size=512):
    """Number of patients holding each distinct key.

    Merges chunk by chunk, so peak memory follows the number of distinct
    keys rather than the number of (patient, key) entries.
    """
    keys = np.zeros(0, dtype=np.int64)
    counts = np.zeros(0, dtype=np.int64)
    for start in range(0, len(per_patient), chunk_size):
        chunk = per_patient[start:start + chunk_size]
        if sum(k.size for k in chunk) == 0:
            continue
        ck, cc = np.unique(np.concatenate(chunk), return_counts=True)
        merged = np.concatenate([keys, ck])
        weights = np.concatenate([counts, cc])
        keys, inverse = np.unique(merged, return_inverse=True)
        counts = np.bincount(inverse.reshape(-1), weights=weights,
                             minlength=keys.size).astype(np.int64)
    return keys, counts


def mine_transitive(cohort, dictionary=None, min_prevalence=None,
                    max_pairs=None, jobs=None):
    """Binary transitive sequence features per patient.

    Only pairs set for at least one patient enter the dictionary, sorted
    by ``(code_a, code_b)``. With ``min_prevalence``, pairs are counted in
    a first pass and only those held by at least that fraction of
    patients are materialized (the same columns `msmr.prevalence_filter`
    would keep). ``dictionary`` restricts mining to given sequence
    descriptors. More than ``max_pairs`` materialized entries raise
    `MiningBudgetError`.
    """
    codes = cohort.codes
    code_index = {c: i for i, c in enumerate(codes)}
    n_codes = len(codes)
    per_patient = _mine_keys(cohort, code_index, jobs)

    if dictionary is not None:
        wanted = [f for f in dictionary if f.kind == SEQUENCE
                  and f.code_a in code_index and f.code_b in code_index]
        wanted_keys = np.array(
            [code_index[f.code_a] * n_codes + code_index[f.code_b]
             for f in wanted], dtype=np.int64)
        keep = np.unique(wanted_keys)
    elif min_prevalence is not None:
        keys, counts = _count_keys(per_patient)
        n = len(cohort)
        keep = keys[counts / float(max(n, 1)) >= min_prevalence]
    else:
        keep = None

    if keep is not None:
        per_patient = [k[np.isin(k, keep, assume_unique=True)]
                       for k in per_patient]

    n_entries = sum(k.size for k in per_patient)
    if max_pairs is not None and n_entries > max_pairs:
        raise MiningBudgetError(
            "mining would materialize %d transitive pair entries (budget "
            "%d); enable the prevalence pre-filter (msmr.mine_prefilter) "
            "or raise msmr.max_pairs" % (n_entries, max_pairs))

    if n_entries > 0:
        all_keys = np.unique(np.concatenate(per_patient))
    else:
        all_keys = np.zeros(0, dtype=np.int64)
    features = [FeatureDescriptor(SEQUENCE, codes[k // n_codes],
                                  codes[k % n_codes]) for k in all_keys]
    row_cols = [np.searchsorted(all_keys, k) for k in per_patient]
    row_vals = [np.ones(k.size) for k in per_patient]
    return SparseFeatureMatrix(_build_csr(row_cols, row_vals, len(features)),
                               features, cohort.patient_ids)


# ####################
# Demographic features
# ####################

def demographic_features(levels):
    features = [FeatureDescriptor(DEMOGRAPHIC, 'age')]
    for col in CATEGORICAL:
        features.extend(FeatureDescriptor(DEMOGRAPHIC, "%s=%s" % (col, lvl))
                        for lvl in levels[col])
    return features


def reference_levels(features):
    """Mask of one-hot columns that are the first level of their field.

    Linear models drop these to avoid a collinear design.
    """
    seen = set()
    mask = np.zeros(len(features), dtype=bool)
    for j, f in enumerate(features):
        if f.kind != DEMOGRAPHIC or '=' not in f.code_a:
            continue
        field = f.code_a.split('=', 1)[0]
        if field not in seen:
            seen.add(field)
            mask[j] = True
    return mask


def mine_demographic(cohort, levels=None):
    """Age in years plus one-hot gender, race and ethnicity.

    ``levels`` (default: the cohort's own) fixes the one-hot columns, so a
    test cohort can be encoded with the training levels.
    """
    levels = cohort.levels if levels is None else levels
    features = demographic_features(levels)
    col = {f.code_a: j for j, f in enumerate(features)}
    row_cols, row_vals = [], []
    for pid in cohort.patient_ids:
        demo = cohort.demographics[pid]
        cols, vals = [], []
        if demo.age != 0:
            cols.append(0)
            vals.append(float(demo.age))
        for field in CATEGORICAL:
            key = "%s=%s" % (field, getattr(demo, field))
            if key in col:
                cols.append(col[key])
                vals.append(1.)
        order = np.argsort(cols)
        row_cols.append(np.array(cols, dtype=np.int64)[order])
        row_vals.append(np.array(vals)[order])
    return SparseFeatureMatrix(_build_csr(row_cols, row_vals, len(features)),
                               features, cohort.patient_ids)


# ########
# Assembly
# ########

def assemble_matrix(raw, seq, demo, include):
    """Concatenate the feature classes in ``include``.

    Blocks are placed in raw, sequence, demographic order; any of the
    inputs not named in ``include`` may be None.
    """
    include = set(include)
    unknown = include - set(KINDS)
    if len(unknown) > 0:
        raise ConfigError("Unknown feature classes: %s"
                          % ", ".join(sorted(unknown)))
    if len(include) == 0:
        raise ConfigError("No feature classes to assemble; nothing to model")

    blocks = [m for kind, m in ((RAW, raw), (SEQUENCE, seq),
                                (DEMOGRAPHIC, demo)) if kind in include]
    if any(m is None for m in blocks):
        raise ValueError("A requested feature class was not provided")
    order = blocks[0].patient_ids
    for m in blocks[1:]:
        if m.patient_ids != order:
            raise DataError("patient order differs between feature blocks")
    features = [f for m in blocks for f in m.features]
    return SparseFeatureMatrix(
        scipy.sparse.hstack([m.data for m in blocks], format='csr'),
        features, order)


def reindex(matrix, features):
    """Express ``matrix`` over the dictionary ``features``.

    Columns absent from ``features`` are dropped; dictionary entries
    absent from ``matrix`` become all-zero columns.
    """
    target = {f: j for j, f in enumerate(features)}
    mapping = np.array([target.get(f, -1) for f in matrix.features],
                       dtype=np.int64)
    coo = matrix.data.tocoo()
    cols = mapping[coo.col] if coo.nnz > 0 else coo.col
    keep = cols >= 0
    data = scipy.sparse.csr_matrix(
        (coo.data[keep], (coo.row[keep], cols[keep])),
        shape=(matrix.shape[0], len(features)))
    return SparseFeatureMatrix(data, features, matrix.patient_ids)


def mine_features(cohort, include, dictionary=None, levels=None,
                  min_prevalence=None, max_pairs=None, jobs=None):
    """Mine and assemble the feature classes in ``include``.

    With ``dictionary``, the result is laid out exactly over it (used to
    encode held-out patients with a training dictionary).
    """
    include = set(include)
    raw = seq = demo = None
    if RAW in include:
        raw = mine_raw(cohort, dictionary=dictionary)
    if SEQUENCE in include:
        seq = mine_transitive(cohort, dictionary=dictionary,
                              min_prevalence=min_prevalence,
                              max_pairs=max_pairs, jobs=jobs)
    if DEMOGRAPHIC in include:
        demo = mine_demographic(cohort, levels=levels)
    matrix = assemble_matrix(raw, seq, demo, include)
    if dictionary is not None:
        matrix = reindex(matrix, dictionary)
    return matrix


# ###########
# Persistence
# ###########

def _pack_str(s):
    b = s.encode('utf-8')
    return struct.pack('<I', len(b)) + b


def _unpack_str(buf, pos):
    n, = struct.unpack_from('<I', buf, pos)
    pos += 4
    return buf[pos:pos + n].decode('utf-8'), pos + n


def save_matrix(matrix, path):
    """Write ``matrix`` in the MLHO binary container.

    Layout (little endian): ``MLHO``, u32 version, u32 n_features,
    u32 n_patients; per feature a u8 kind, code_a, and for sequence
    features code_b (strings as u32 length + UTF-8); per patient its id,
    u32 nnz, nnz u32 delta-encoded column indices, nnz f64 values.
    """
    out = [MAGIC, struct.pack('<III', FORMAT_VERSION, matrix.n_features,
                              len(matrix.patient_ids))]
    for f in matrix.features:
        out.append(struct.pack('<B', _KIND_CODES[f.kind]))
        out.append(_pack_str(f.code_a))
        if f.kind == SEQUENCE:
            out.append(_pack_str(f.code_b))
    for pid, indices, values in matrix.rows():
        out.append(_pack_str(str(pid)))
        out.append(struct.pack('<I', indices.size))
        deltas = np.diff(indices, prepend=0) if indices.size > 0 else indices
        out.append(np.asarray(deltas, dtype='<u4').tobytes())
        out.append(np.asarray(values, dtype='<f8').tobytes())
    with open(path, 'wb') as fp:
        fp.write(b''.join(out))


def load_matrix(path):
    with open(path, 'rb') as fp:
        buf = fp.read()
    if buf[:4] != MAGIC:
        raise DataError("%s is not an MLHO matrix file" % path)
    version, n_features, n_patients = struct.unpack_from('<III', buf, 4)
    if version != FORMAT_VERSION:
        raise DataError("unsupported MLHO matrix version %d" % version)
    pos = 16
    kinds = {v: k for k, v in _KIND_CODES.items()}
    features = []
    for _ in range(n_features):
        kind = kinds[buf[pos]]
        code_a, pos = _unpack_str(buf, pos + 1)
        code_b = None
        if kind == SEQUENCE:
            code_b, pos = _unpack_str(buf, pos)
        features.append(FeatureDescriptor(kind, code_a, code_b))
    patient_ids, row_cols, row_vals = [], [], []
    for _ in range(n_patients):
        pid, pos = _unpack_str(buf, pos)
        nnz, = struct.unpack_from('<I', buf, pos)
        pos += 4
        deltas = np.frombuffer(buf, dtype='<u4', count=nnz, offset=pos)
        pos += 4 * nnz
        values = np.frombuffer(buf, dtype='<f8', count=nnz, offset=pos)
        pos += 8 * nnz
        patient_ids.append(pid)
        row_cols.append(np.cumsum(deltas.astype(np.int64)))
        row_vals.append(values.copy())
    return SparseFeatureMatrix(_build_csr(row_cols, row_vals, n_features),
                               features, patient_ids)


def export_text(matrix):
    """Debug export as a ``patient_id,feature,value`` DataFrame."""
    rows = [(pid, describe(matrix.features[j]), v)
            for pid, indices, values in matrix.rows()
            for j, v in zip(indices, values)]
    return pd.DataFrame(rows, columns=['patient_id', 'feature', 'value'])
