import numpy as np
import pytest
from sklearn.metrics import mutual_info_score

from mlho import msmr
from mlho.exceptions import DataError
from mlho.msmr import (
    TIE_RTOL, entropy, jmi_greedy_select, mi_rank_filter, mi_scores,
    mutual_information, prevalence_filter, run_msmr, selection_report)
from mlho.tspm import RAW, FeatureDescriptor, SparseFeatureMatrix


def matrix(X):
    X = np.asarray(X, dtype=float)
    features = [FeatureDescriptor(RAW, "F%02d" % j) for j in range(X.shape[1])]
    return SparseFeatureMatrix(X, features,
                               ["p%d" % i for i in range(X.shape[0])])


def closed_form(a, b, c, d):
    """MI of the 2x2 table [[a, b], [c, d]] (x by y), written out."""
    n = float(a + b + c + d)
    total = 0.
    for nxy, nx, ny in [(a, a + b, a + c), (b, a + b, b + d),
                        (c, c + d, a + c), (d, c + d, b + d)]:
        if nxy > 0:
            total += nxy / n * np.log(nxy * n / (nx * ny))
    return total


def test_mi_identical_columns_is_ln2():
    x = np.array([0, 1] * 20)
    assert abs(mutual_information(x, x) - np.log(2)) <= 1e-12


def test_mi_independent_is_zero():
    x = np.array([0, 0, 1, 1])
    y = np.array([0, 1, 0, 1])
    assert mutual_information(x, y) == 0.


def test_mi_closed_forms(rng):
    for _ in range(50):
        n = rng.randint(2, 60)
        x = rng.randint(0, 2, n)
        y = rng.randint(0, 2, n)
        a = np.sum((x == 0) & (y == 0))
        b = np.sum((x == 0) & (y == 1))
        c = np.sum((x == 1) & (y == 0))
        d = np.sum((x == 1) & (y == 1))
        assert abs(mutual_information(x, y) - closed_form(a, b, c, d)) <= 1e-12


def test_mi_is_symmetric(rng):
    for _ in range(30):
        n = rng.randint(2, 80)
        x = rng.randint(0, 2, n)
        y = rng.randint(0, 2, n)
        assert abs(mutual_information(x, y)
                   - mutual_information(y, x)) <= 1e-12


def test_mi_uses_presence():
    counts = np.array([0, 3, 0, 7, 1])
    y = np.array([0, 1, 0, 1, 1])
    assert mutual_information(counts, y) == mutual_information(counts > 0, y)


def test_mi_scores_match_sklearn(rng):
    X = rng.binomial(1, 0.3, size=(80, 12)) * rng.randint(1, 4, (80, 12))
    y = rng.randint(0, 2, 80)
    ours = mi_scores(matrix(X), y)
    for j in range(12):
        assert ours[j] == pytest.approx(
            mutual_info_score(X[:, j] > 0, y), abs=1e-12)
        assert ours[j] <= min(entropy(X[:, j] > 0), entropy(y)) + 1e-12


def test_prevalence_filter():
    m = matrix([[1, 0, 0], [1, 0, 1], [1, 0, 0], [0, 0, 0]])
    assert prevalence_filter(m, 0) is m
    kept = prevalence_filter(m, 0.25)
    assert [f.code_a for f in kept.features] == ['F00', 'F02']
    with pytest.raises(DataError, match="min_prevalence"):
        prevalence_filter(m, 0.9)


def test_mi_rank_filter_keeps_dictionary_order():
    y = np.array([0, 0, 1, 1, 0, 1])
    X = np.column_stack([
        [0, 0, 0, 1, 0, 0],   # weak
        y,                    # perfect
        [1, 0, 1, 1, 0, 1],   # strong
    ])
    kept = mi_rank_filter(matrix(X), y, 2)
    assert [f.code_a for f in kept.features] == ['F01', 'F02']
    assert mi_rank_filter(matrix(X), y, 5).n_features == 3


def joint_mi(xc, xs, y):
    return mutual_info_score(2 * xc + xs, y)


def brute_force_greedy(X, y, budget):
    """Reference greedy JMI recomputing every pair score from scratch."""
    p = X.shape[1]
    mi = np.array([mutual_info_score(X[:, j], y) for j in range(p)])

    def pick(values, candidates):
        best = max(values[c] for c in candidates)
        tol = TIE_RTOL * max(1., abs(best))
        return min(c for c in candidates if values[c] >= best - tol)

    selected = [pick(mi, range(p))]
    while len(selected) < min(budget, p):
        candidates = [c for c in range(p) if c not in selected]
        scores = np.zeros(p)
        for c in candidates:
            scores[c] = sum(joint_mi(X[:, c], X[:, s], y) for s in selected)
        selected.append(pick(scores, candidates))
    return selected


def test_jmi_matches_brute_force():
    rng = np.random.RandomState(23)
    for _ in range(100):
        n, p = rng.randint(20, 80), rng.randint(2, 11)
        X = rng.binomial(1, rng.uniform(0.1, 0.6, p), size=(n, p))
        y = rng.randint(0, 2, n)
        if y.min() == y.max():
            y[0] = 1 - y[0]
        budget = rng.randint(1, p + 1)
        got = jmi_greedy_select(matrix(X), y, budget)
        assert list(got.selected) == brute_force_greedy(X, y, budget)
        assert len(got.scores) == len(got.selected) - 1


def test_jmi_prefers_complement_over_duplicate():
    # y = a XOR b: b alone carries nothing, but with a it fixes y
    rows = ([(0, 0)] * 20 + [(0, 1)] * 10 + [(1, 0)] * 20 + [(1, 1)] * 10)
    a, b = np.array(rows).T
    y = a ^ b
    assert mutual_information(b, y) == 0.
    X = np.column_stack([a, a, b])
    sel = jmi_greedy_select(matrix(X), y, 2)
    assert sel.selected == (0, 2)
    assert sel.scores[0] == pytest.approx(np.log(2), abs=1e-12)


def test_jmi_ignores_row_order(rng):
    X = rng.binomial(1, rng.uniform(0.1, 0.6, 12), size=(150, 12))
    y = rng.binomial(1, 0.2 + 0.5 * X[:, 2])
    order = rng.permutation(150)
    a = jmi_greedy_select(matrix(X), y, 6)
    b = jmi_greedy_select(matrix(X[order]), y[order], 6)
    assert a.selected == b.selected
    assert a.scores == b.scores


def test_jmi_pair_scores_agree_with_direct_computation(rng):
    X = rng.binomial(1, 0.4, size=(60, 6))
    y = rng.randint(0, 2, 60)
    Xb = matrix(X).binarized().tocsc()
    got = msmr.pair_scores(Xb, y.astype(float), 3)
    for c in range(6):
        assert got[c] == pytest.approx(joint_mi(X[:, c], X[:, 3], y),
                                       abs=1e-12)


def test_jmi_errors():
    with pytest.raises(ValueError):
        jmi_greedy_select(matrix(np.eye(3)), [0, 1, 0], 0)
    with pytest.raises(ValueError):
        jmi_greedy_select(matrix(np.eye(3)), [0, 2, 0], 1)


def test_run_msmr_counts_monotone(rng):
    X = rng.binomial(1, rng.uniform(0.001, 0.3, 300), size=(200, 300))
    X[:, 5] = rng.binomial(1, 0.3, 200)
    y = (X[:, 5] | rng.binomial(1, 0.1, 200)).astype(int)
    result = run_msmr(matrix(X), y, min_prevalence=0.02, mi_keep=50,
                      jmi_budget=10)
    steps = [s for s, _ in result.counts]
    counts = [c for _, c in result.counts]
    assert steps == ['mined', 'prevalence', 'mi', 'jmi']
    assert counts[0] == 300 and counts[2] <= 50 and counts[3] == 10
    assert counts == sorted(counts, reverse=True)
    assert result.matrix.n_features == 10
    assert FeatureDescriptor(RAW, 'F05') in result.matrix.features

    report = selection_report(result.ranked, result.selection, result.mi)
    assert list(report.columns) == ['rank', 'kind', 'code_a', 'code_b', 'mi',
                                    'jmi_gain']
    assert report['code_a'].iloc[0] == 'F05'
    assert np.isnan(report['jmi_gain'].iloc[0])
    assert report['rank'].tolist() == list(range(1, 11))
