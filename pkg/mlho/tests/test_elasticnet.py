import dill
import numpy as np
import pytest

from mlho.exceptions import ConfigError, DataError
from mlho.learners import (
    embedded_feature_screen, fit_learner, load_model, registry, save_model)
from mlho.learners.elasticnet import (
    Standardizer, coefficient_table, fit_elastic_net, lambda_max,
    soft_threshold)
from mlho.tests.conftest import fast_config
from mlho.tspm import DEMOGRAPHIC, RAW, FeatureDescriptor, SparseFeatureMatrix


def logistic_data(rng, n=300, p=8, coef=(1.5, -1.0)):
    X = rng.randn(n, p)
    logit = X[:, :len(coef)].dot(coef) - 0.5
    y = rng.binomial(1, 1 / (1 + np.exp(-logit))).astype(float)
    return X, y


def test_soft_threshold():
    assert np.array_equal(soft_threshold(np.array([-3., -0.5, 0., 0.5, 2.]),
                                         1.),
                          [-2., 0., 0., 0., 1.])


def test_kkt_conditions_hold(rng):
    X, y = logistic_data(rng)
    lmax = lambda_max(Standardizer(X).transform(X), y, 0.5)
    for lam in (0.5 * lmax, 0.1 * lmax, 0.01 * lmax):
        model = fit_elastic_net(X, y, alpha=0.5, lambdas=[lam], n_folds=1,
                                tol=1e-10)
        assert model.lam == lam
        assert np.all(model.kkt_residuals(X, y) <= 1e-4)


def test_above_lambda_max_all_zero(rng):
    X, y = logistic_data(rng)
    lmax = lambda_max(Standardizer(X).transform(X), y, 0.5)
    for lam in (lmax, 1.5 * lmax):
        model = fit_elastic_net(X, y, alpha=0.5, lambdas=[lam], n_folds=1)
        assert np.all(model.coef == 0)
        assert model.intercept == pytest.approx(np.log(y.mean()
                                                       / (1 - y.mean())))
    just_below = fit_elastic_net(X, y, alpha=0.5, lambdas=[0.9 * lmax],
                                 n_folds=1)
    assert len(just_below.screen()) > 0


def test_duplicate_columns_share_weight(rng):
    X, y = logistic_data(rng, p=4)
    X = np.column_stack([X[:, 0], X])
    lmax = lambda_max(Standardizer(X).transform(X), y, 0.5)
    model = fit_elastic_net(X, y, alpha=0.5, lambdas=[0.05 * lmax],
                            n_folds=1, tol=1e-12)
    assert model.coef[0] != 0
    assert model.coef[0] == pytest.approx(model.coef[1], rel=1e-2)


def test_lasso_keeps_one_of_duplicate_columns():
    for seed in range(10):
        rng = np.random.RandomState(seed)
        X, y = logistic_data(rng, p=4)
        X = np.column_stack([X[:, 0], X])
        lmax = lambda_max(Standardizer(X).transform(X), y, 1.)
        fits = [fit_elastic_net(X, y, alpha=1., lambdas=[f * lmax],
                                n_folds=1) for f in (0.5, 0.1, 0.02)]
        fits.append(fit_elastic_net(X, y, alpha=1., n_lambdas=15,
                                    n_folds=3, seed=seed))
        for model in fits:
            assert len(model.screen() & {0, 1}) <= 1
            assert np.all(model.kkt_residuals(X, y) <= 1e-4)
        assert len(fits[-1].screen() & {0, 1}) == 1


def test_l1_norm_grows_as_lambda_falls(rng):
    X, y = logistic_data(rng, p=6)
    model = fit_elastic_net(X, y, alpha=1., n_lambdas=30, n_folds=1)
    assert model.path_l1.size == 30
    assert np.all(np.diff(model.path_l1) >= -1e-8)
    assert model.path_l1[0] == 0


def test_balanced_noise_column_stays_zero():
    # within each level of x, z is split evenly and has the same
    # positive rate, so it carries no information about y
    x = np.repeat([0., 0., 1., 1.], 100)
    z = np.repeat([0., 1., 0., 1.], 100)
    y = np.concatenate([np.repeat([1., 0.], [20, 80]),
                        np.repeat([1., 0.], [20, 80]),
                        np.repeat([1., 0.], [70, 30]),
                        np.repeat([1., 0.], [70, 30])])
    X = np.column_stack([x, z])
    model = fit_elastic_net(X, y, alpha=0.5, n_lambdas=20, n_folds=5,
                            seed=4)
    assert model.coef[0] > 0
    assert model.coef[1] == 0
    assert model.screen() == {0}
    assert np.all(model.kkt_residuals(X, y) <= 1e-4)


def test_ridge_path_is_not_all_zero(rng):
    X, y = logistic_data(rng)
    Z = Standardizer(X).transform(X)
    assert lambda_max(Z, y, 0.) == np.inf
    model = fit_elastic_net(X, y, alpha=0., n_lambdas=10, n_folds=1)
    assert np.all(model.coef[:2] != 0)
    assert np.all(model.kkt_residuals(X, y) <= 1e-4)
    first = fit_elastic_net(X, y, alpha=0., lambdas=[model.lambdas[0]],
                            n_folds=1)
    assert len(first.screen()) > 0


def test_coefficients_on_original_scale(rng):
    X, y = logistic_data(rng)
    lmax = lambda_max(Standardizer(X).transform(X), y, 0.5)
    scaled = X * np.array([10.] + [1.] * (X.shape[1] - 1))
    a = fit_elastic_net(X, y, lambdas=[0.05 * lmax], n_folds=1)
    b = fit_elastic_net(scaled, y, lambdas=[0.05 * lmax], n_folds=1)
    assert b.coef[0] == pytest.approx(a.coef[0] / 10., rel=1e-6)
    assert np.allclose(a.predict_proba(X), b.predict_proba(scaled))


def test_constant_column_stays_out(rng):
    X, y = logistic_data(rng)
    X[:, 5] = 3.
    model = fit_elastic_net(X, y, n_lambdas=10, n_folds=1)
    assert model.coef[5] == 0
    assert 5 not in model.screen()


def test_cv_chooses_lambda_on_path(rng):
    X, y = logistic_data(rng, n=400)
    model = fit_elastic_net(X, y, n_lambdas=12, n_folds=5, seed=2)
    assert model.lam == model.lambdas[-1]
    assert np.all(np.diff(model.lambdas) < 0)
    assert {0, 1} <= model.screen()
    again = fit_elastic_net(X, y, n_lambdas=12, n_folds=5, seed=2)
    assert again.lam == model.lam
    assert np.array_equal(again.coef, model.coef)


def test_exclude_mask(rng):
    X, y = logistic_data(rng)
    mask = np.zeros(X.shape[1], dtype=bool)
    mask[0] = True
    model = fit_elastic_net(X, y, n_lambdas=10, n_folds=1, exclude=mask)
    assert model.coef[0] == 0
    assert 1 in model.screen()


def test_single_class_is_data_error():
    with pytest.raises(DataError):
        fit_elastic_net(np.eye(3), np.ones(3), n_folds=1)
    with pytest.raises(ValueError):
        fit_elastic_net(np.eye(3), [0, 1, 0], alpha=2)


def test_coefficient_table(rng):
    X, y = logistic_data(rng)
    features = [FeatureDescriptor(RAW, "C%d" % j) for j in range(X.shape[1])]
    model = fit_elastic_net(X, y, n_lambdas=10, n_folds=1,
                            features=features)
    table = coefficient_table(model)
    assert table['feature'].iloc[0] == '(intercept)'
    assert len(table) == len(model.screen()) + 1
    assert 'C0' in table['feature'].tolist()


def feature_matrix(rng, n=300):
    codes = rng.binomial(1, 0.3, size=(n, 4)).astype(float)
    gender = rng.randint(0, 2, n)
    X = np.column_stack([codes, gender == 0, gender == 1])
    y = rng.binomial(1, 0.1 + 0.6 * codes[:, 0])
    features = ([FeatureDescriptor(RAW, "C%d" % j) for j in range(4)]
                + [FeatureDescriptor(DEMOGRAPHIC, 'gender=F'),
                   FeatureDescriptor(DEMOGRAPHIC, 'gender=M')])
    m = SparseFeatureMatrix(X, features, ["p%d" % i for i in range(n)])
    return m, y


def test_registry_and_unknown_learner(rng):
    assert sorted(registry) == ['elastic_net', 'gbm']
    m, y = feature_matrix(rng)
    with pytest.raises(ConfigError, match="Unknown learner 'svm'"):
        fit_learner('svm', m, y, fast_config(), seed=0, n_folds=3)


def test_fit_learner_elastic_net_drops_reference_level(rng):
    m, y = feature_matrix(rng)
    model = fit_learner('elastic_net', m, y, fast_config(), seed=0,
                        n_folds=3)
    assert model.family == 'elastic_net'
    assert model.features == m.features
    assert model.coef[4] == 0
    assert 0 in embedded_feature_screen(model)


def test_fit_learner_gbm(rng):
    m, y = feature_matrix(rng)
    model = fit_learner('gbm', m, y, fast_config(), seed=0, n_folds=3)
    assert model.family == 'gbm'
    assert model.n_trees in (20, 40)
    assert 0 in embedded_feature_screen(model)
    order = list(range(m.n_features))[::-1]
    with pytest.raises(ValueError):
        model.predict_proba(SparseFeatureMatrix(
            m.data[:, order], [m.features[j] for j in order], m.patient_ids))


def test_model_save_load(tmp_path, rng):
    m, y = feature_matrix(rng)
    model = fit_learner('gbm', m, y, fast_config(), seed=1, n_folds=3)
    path = str(tmp_path / 'model.pkl')
    save_model(model, path)
    back = load_model(path)
    assert np.array_equal(back.predict_proba(m), model.predict_proba(m))

    other = tmp_path / "other.pkl"
    with open(str(other), 'wb') as fp:
        dill.dump({'format': 'something-else'}, fp)
    with pytest.raises(DataError, match="not a saved mlho model"):
        load_model(str(other))
