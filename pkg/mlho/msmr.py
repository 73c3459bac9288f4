"""Minimize sparsity, maximize relevance.

Three filters applied in order: drop rare features, keep the features
with highest mutual information with the outcome, then greedily select
by joint mutual information. Information is measured in nats on the
presence indicator of each column.
"""
from collections import namedtuple

import numpy as np
import pandas as pd
from nengo.utils.stdlib import Timer

from .exceptions import DataError
from .utils import log

MiScore = namedtuple('MiScore', ['feature', 'mi'])
JmiSelection = namedtuple('JmiSelection', ['selected', 'scores'])
MsmrResult = namedtuple('MsmrResult',
                        ['matrix', 'ranked', 'mi', 'selection', 'counts'])

# Relative tolerance under which two JMI scores count as tied
TIE_RTOL = 1e-12


def _check_labels(labels, n):
    y = np.asarray(labels)
    if y.ndim != 1 or y.size != n:
        raise ValueError("labels must be a vector of length %d" % n)
    if n == 0:
        raise DataError("cannot score features on zero patients")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    return y.astype(np.float64)


def _mi_from_table(counts):
    """Plug-in MI of contingency tables over the last two axes.

    ``0 log 0`` is taken as 0. Cells are summed in a fixed order so the
    same table always yields the same float.
    """
    counts = np.asarray(counts, dtype=np.float64)
    n = counts.sum(axis=(-2, -1))[..., None, None]
    row = counts.sum(axis=-1)[..., :, None]
    col = counts.sum(axis=-2)[..., None, :]
    with np.errstate(divide='ignore', invalid='ignore'):
        terms = np.where(counts > 0,
                         counts / n * np.log(counts * n / (row * col)), 0.)
    flat = terms.reshape(terms.shape[:-2] + (-1,))
    total = np.zeros(flat.shape[:-1])
    for k in range(flat.shape[-1]):
        total = total + flat[..., k]
    return np.maximum(total, 0.)


def entropy(x):
    """Empirical entropy (nats) of a discrete vector."""
    _, counts = np.unique(np.asarray(x), return_counts=True)
    p = counts / float(counts.sum())
    return float(-np.sum(p * np.log(p)))


def mutual_information(x, y):
    """Empirical MI between presence of ``x`` and binary ``y``.

    Nonzero entries of ``x`` count as present.
    """
    x = np.asarray(x) != 0
    y = np.asarray(y) != 0
    if x.shape != y.shape or x.size == 0:
        raise ValueError("x and y must be non-empty and of equal length")
    table = np.array([[np.sum(~x & ~y), np.sum(~x & y)],
                      [np.sum(x & ~y), np.sum(x & y)]])
    return float(_mi_from_table(table))


def mi_scores(matrix, labels):
    """MI of every column's presence indicator with ``labels``."""
    n = matrix.shape[0]
    y = _check_labels(labels, n)
    X = matrix.binarized()
    n_y = y.sum()
    n_x = np.asarray(X.sum(axis=0)).ravel()
    n_xy = X.T.dot(y)
    table = np.empty((matrix.n_features, 2, 2))
    table[:, 1, 1] = n_xy
    table[:, 1, 0] = n_x - n_xy
    table[:, 0, 1] = n_y - n_xy
    table[:, 0, 0] = n - n_x - n_y + n_xy
    return _mi_from_table(table)


def ranked_scores(matrix, labels):
    """`MiScore` per feature, best first (ties in dictionary order)."""
    mi = mi_scores(matrix, labels)
    order = np.lexsort((np.arange(mi.size), -mi))
    return [MiScore(int(j), float(mi[j])) for j in order]


def prevalence_filter(matrix, min_prevalence):
    """Keep features present in at least ``min_prevalence`` of patients."""
    if not 0 <= min_prevalence < 1:
        raise ValueError("min_prevalence must be in [0, 1)")
    if min_prevalence == 0:
        return matrix
    n = matrix.shape[0]
    keep = np.flatnonzero(matrix.nonzero_counts() / float(n)
                          >= min_prevalence)
    if keep.size == 0:
        raise DataError("no feature is present in %.4g of %d patients; "
                        "lower msmr.min_prevalence" % (min_prevalence, n))
    return matrix.select(keep)


def mi_rank_filter(matrix, labels, keep_count, mi=None):
    """Keep the ``keep_count`` features with the highest MI.

    Surviving columns stay in dictionary order.
    """
    if keep_count < 1:
        raise ValueError("keep_count must be at least 1")
    if matrix.n_features <= keep_count:
        return matrix
    mi = mi_scores(matrix, labels) if mi is None else mi
    order = np.lexsort((np.arange(mi.size), -mi))
    return matrix.select(np.sort(order[:keep_count]))


def _argmax_lowest(values, candidates):
    """Lowest index among ``candidates`` whose value ties the maximum."""
    vals = values[candidates]
    best = vals.max()
    tied = vals >= best - TIE_RTOL * max(1., abs(best))
    return int(candidates[np.flatnonzero(tied)[0]])


def pair_scores(X, y, s, n_xy=None):
    """``I((X_c, X_s); Y)`` for every column ``c`` of binary CSR ``X``.

    The joint of two binary features is a 4-level variable; the counts of
    its 8 cells with ``y`` follow by inclusion-exclusion from four sparse
    products.
    """
    n = float(X.shape[0])
    xs = np.asarray(X[:, s].todense()).ravel()
    n_c = np.asarray(X.sum(axis=0)).ravel()
    n_cy = X.T.dot(y) if n_xy is None else n_xy
    n_cs = X.T.dot(xs)
    n_csy = X.T.dot(xs * y)
    n_s, n_sy, n_y = xs.sum(), (xs * y).sum(), y.sum()

    table = np.empty((X.shape[1], 4, 2))
    # rows: (c, s) in 11, 10, 01, 00; columns: y = 0, 1
    table[:, 0, 1] = n_csy
    table[:, 0, 0] = n_cs - n_csy
    table[:, 1, 1] = n_cy - n_csy
    table[:, 1, 0] = n_c - n_cs - n_cy + n_csy
    table[:, 2, 1] = n_sy - n_csy
    table[:, 2, 0] = (n_s - n_sy) - (n_cs - n_csy)
    table[:, 3, 1] = (n_y - n_sy) - (n_cy - n_csy)
    table[:, 3, 0] = n - table[:, :3, :].sum(axis=(1, 2)) - table[:, 3, 1]
    return _mi_from_table(table)


def jmi_greedy_select(matrix, labels, budget, mi=None):
    """Greedy joint mutual information selection.

    Starts from the top-MI feature and repeatedly adds the candidate
    maximizing the sum over selected ``s`` of ``I((X_c, X_s); Y)``.
    Pair scores are accumulated as features are added, so each step costs
    one pass over the columns.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    if matrix.n_features == 0:
        raise DataError("no features left for JMI selection")
    y = _check_labels(labels, matrix.shape[0])
    X = matrix.binarized().tocsc()
    mi = mi_scores(matrix, labels) if mi is None else np.asarray(mi)
    n_xy = X.T.dot(y)

    p = matrix.n_features
    available = np.ones(p, dtype=bool)
    selected = [_argmax_lowest(mi, np.arange(p))]
    available[selected[0]] = False
    scores = []
    jmi = np.zeros(p)
    while len(selected) < min(budget, p):
        jmi += pair_scores(X, y, selected[-1], n_xy=n_xy)
        best = _argmax_lowest(jmi, np.flatnonzero(available))
        selected.append(best)
        scores.append(float(jmi[best]))
        available[best] = False
    return JmiSelection(tuple(selected), tuple(scores))


def run_msmr(matrix, labels, min_prevalence, mi_keep, jmi_budget):
    """All three steps, recording the feature count after each."""
    counts = [('mined', matrix.n_features)]
    with Timer() as t:
        filtered = prevalence_filter(matrix, min_prevalence)
    counts.append(('prevalence', filtered.n_features))
    log("Prevalence filter kept %d of %d features in %.3f seconds"
        % (filtered.n_features, matrix.n_features, t.duration))

    with Timer() as t:
        ranked = mi_rank_filter(filtered, labels, mi_keep)
        mi = mi_scores(ranked, labels)
    counts.append(('mi', ranked.n_features))
    log("MI ranking kept %d features in %.3f seconds"
        % (ranked.n_features, t.duration))

    with Timer() as t:
        selection = jmi_greedy_select(ranked, labels, jmi_budget, mi=mi)
    counts.append(('jmi', len(selection.selected)))
    log("JMI selected %d features in %.3f seconds"
        % (len(selection.selected), t.duration))

    values = [c for _, c in counts]
    assert all(a >= b for a, b in zip(values, values[1:]))
    return MsmrResult(matrix=ranked.select(selection.selected),
                      ranked=ranked, mi=mi, selection=selection,
                      counts=counts)


def selection_report(matrix, selection, mi):
    """Selected features as ``rank,kind,code_a,code_b,mi,jmi_gain`` rows.

    ``matrix`` is the one ``selection`` indexes into; ``jmi_gain`` is
    empty for the first (top-MI) feature.
    """
    rows = []
    for rank, j in enumerate(selection.selected):
        f = matrix.features[j]
        gain = selection.scores[rank - 1] if rank > 0 else np.nan
        rows.append((rank + 1, f.kind, f.code_a,
                     '' if f.code_b is None else f.code_b, mi[j], gain))
    return pd.DataFrame(rows, columns=['rank', 'kind', 'code_a', 'code_b',
                                       'mi', 'jmi_gain'])
