import numpy as np
import pytest
import scipy.sparse

from mlho.evaluation import auc_score
from mlho.exceptions import DataError
from mlho.learners.gbm import (
    bernoulli_loss, deviance, fit_gbm, fit_gbm_cv, influence_table,
    negative_gradient, relative_influence, stratified_folds)
from mlho.settings import PipelineConfig


def test_negative_gradient_matches_finite_differences(rng):
    y = rng.randint(0, 2, 50).astype(float)
    f = rng.randn(50) * 3
    h = 1e-6
    numeric = -(bernoulli_loss(y, f + h) - bernoulli_loss(y, f - h)) / (2 * h)
    assert np.allclose(negative_gradient(y, f), numeric, rtol=1e-6,
                       atol=1e-9)


def test_deviance_at_base_rate():
    y = np.array([0., 0., 0., 1.])
    f = np.full(4, np.log(1 / 3.))
    expected = -2 * (0.75 * np.log(0.75) + 0.25 * np.log(0.25))
    assert deviance(y, f) == pytest.approx(expected)


def signal_data(rng, n=300, p=10, signal=3):
    X = rng.binomial(1, 0.4, size=(n, p)).astype(float)
    y = X[:, signal].copy()
    return X, y


def test_training_deviance_never_increases(rng):
    X = rng.binomial(1, 0.3, size=(400, 20)).astype(float)
    y = rng.binomial(1, 0.2 + 0.5 * X[:, 0])
    model = fit_gbm(X, y, n_trees=60, shrinkage=0.3, max_depth=3,
                    bag_fraction=0.5, min_leaf=5, seed=1)
    dev = model.train_deviance
    assert len(dev) == 61
    assert all(a >= b for a, b in zip(dev, dev[1:]))
    assert dev[-1] < dev[0]


def test_single_signal_gets_all_influence(rng):
    X, y = signal_data(rng)
    model = fit_gbm(X, y, n_trees=50, shrinkage=0.1, max_depth=1,
                    bag_fraction=1., min_leaf=1, seed=0)
    assert relative_influence(model) == {3: 100.}
    assert model.screen() == {3}
    assert auc_score(model.predict_proba(X), y) == 1.


def test_influence_scaled_to_100(rng):
    X = rng.binomial(1, 0.4, size=(500, 8)).astype(float)
    logit = 2 * X[:, 0] + X[:, 1] - 1.5
    y = rng.binomial(1, 1 / (1 + np.exp(-logit)))
    model = fit_gbm(X, y, n_trees=80, max_depth=2, min_leaf=5, seed=2)
    ri = relative_influence(model)
    values = list(ri.values())
    assert max(values) == pytest.approx(100.)
    assert values == sorted(values, reverse=True)
    assert list(ri)[0] == 0
    table = influence_table(model)
    assert list(table.columns) == ['index', 'feature', 'influence']
    assert table['index'].tolist() == list(ri)


def test_pure_noise_cv_auc_near_half():
    rng = np.random.RandomState(5)
    X = rng.binomial(1, 0.3, size=(1000, 15)).astype(float)
    y = rng.binomial(1, 0.3, 1000)
    oof = np.zeros(1000)
    for train, valid in stratified_folds(y, 5, seed=0):
        model = fit_gbm(X[train], y[train], n_trees=50, max_depth=2,
                        min_leaf=10, seed=3)
        oof[valid] = model.predict_proba(X[valid])
    assert 0.4 <= auc_score(oof, y) <= 0.6


def test_staged_decision_matches_truncate(rng):
    X, y = signal_data(rng)
    y = np.where(rng.rand(y.size) < 0.1, 1 - y, y)
    model = fit_gbm(X, y, n_trees=30, max_depth=2, min_leaf=5, seed=4)
    staged = model.staged_decision(X, [0, 5, 30])
    assert np.allclose(staged[0], model.f0)
    assert np.allclose(staged[5], model.truncate(5).decision_function(X))
    assert np.allclose(staged[30], model.decision_function(X))


def test_sparse_and_dense_inputs_agree(rng):
    X, y = signal_data(rng)
    y = np.where(rng.rand(y.size) < 0.2, 1 - y, y)
    dense = fit_gbm(X, y, n_trees=20, seed=6)
    sparse = fit_gbm(scipy.sparse.csr_matrix(X), y, n_trees=20, seed=6)
    assert np.allclose(dense.predict_proba(X), sparse.predict_proba(X))


def test_gbm_rejects_single_class():
    with pytest.raises(DataError):
        fit_gbm(np.eye(4), np.zeros(4))
    with pytest.raises(ValueError):
        fit_gbm(np.eye(4), [0, 1, 0, 1], bag_fraction=0)


def test_fit_gbm_cv_picks_from_grid(rng):
    X = rng.binomial(1, 0.4, size=(300, 6)).astype(float)
    y = rng.binomial(1, 0.15 + 0.6 * X[:, 2])
    params = PipelineConfig().gbm
    params.update(n_trees=[10, 30], shrinkage=[0.1, 0.3], max_depth=[1, 2],
                  min_leaf=5)
    model = fit_gbm_cv(X, y, params, n_folds=3, seed=8)
    assert model.n_trees in (10, 30)
    assert model.shrinkage in (0.1, 0.3)
    assert model.max_depth in (1, 2)
    assert 2 in model.screen()

    again = fit_gbm_cv(X, y, params, n_folds=3, seed=8)
    assert again.hyper == model.hyper
    assert np.array_equal(again.predict_proba(X), model.predict_proba(X))


def test_fit_gbm_cv_too_few_positives():
    X = np.eye(10)
    y = np.zeros(10)
    y[0] = 1
    params = PipelineConfig().gbm
    params.update(n_trees=[5, 10], min_leaf=1)
    with pytest.warns(UserWarning, match="too few positives"):
        model = fit_gbm_cv(X, y, params, n_folds=5, seed=0)
    assert model.n_trees == 5


def test_single_stump_matches_newton_step():
    X = np.array([[0.], [0.], [1.], [1.]])
    y = np.array([0., 1., 1., 1.])
    model = fit_gbm(X, y, n_trees=1, shrinkage=1., max_depth=1,
                    bag_fraction=1., min_leaf=1, seed=0)
    # F0 = log 3; each leaf moves by sum(y - p) / sum(p (1 - p))
    f0 = np.log(3.)
    step = 0.5 / (2 * 0.75 * 0.25)
    expected = 1 / (1 + np.exp(-np.array([f0 - step, f0 - step,
                                          f0 + step, f0 + step])))
    assert np.allclose(model.predict_proba(X), expected, atol=1e-12)
    assert np.allclose(expected, [0.4416, 0.4416, 0.9192, 0.9192],
                       atol=1e-4)


def test_no_trees_predicts_prevalence(rng):
    X = rng.binomial(1, 0.5, size=(40, 3)).astype(float)
    y = np.array([1.] * 10 + [0.] * 30)
    model = fit_gbm(X, y, n_trees=0, seed=0)
    assert np.allclose(model.predict_proba(X), 0.25)
    assert relative_influence(model) == {}
    assert model.screen() == set()


def test_influence_ignores_row_order(rng):
    X = rng.randn(300, 6)
    y = rng.binomial(1, 1 / (1 + np.exp(-(2 * X[:, 0] - X[:, 4]))))
    order = rng.permutation(300)
    kwargs = dict(n_trees=20, shrinkage=0.2, max_depth=2, bag_fraction=1.,
                  min_leaf=5, seed=3)
    a = relative_influence(fit_gbm(X, y, **kwargs))
    b = relative_influence(fit_gbm(X[order], y[order], **kwargs))
    assert sorted(a) == sorted(b)
    for j in a:
        assert b[j] == pytest.approx(a[j], rel=1e-6)
