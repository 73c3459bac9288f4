"""Stochastic gradient boosting for a binary outcome.

Each iteration fits a least-squares regression tree to the residuals
``y - p`` on a random subsample of patients, replaces the tree's leaf
means with one Newton step on the Bernoulli deviance, and adds the tree
scaled by the shrinkage. The squared-error improvement of every split is
credited to its feature for relative influence.
"""
import itertools
import warnings

import numpy as np
import pandas as pd
import scipy.sparse
from nengo.utils.stdlib import Timer
from sklearn.model_selection import StratifiedKFold
from sklearn.tree import DecisionTreeRegressor

from ..exceptions import DataError
from ..utils import log

EPS = 1e-15
FAMILY = 'gbm'


def bernoulli_loss(y, f):
    """Per-patient negative log likelihood ``log(1 + e^f) - y f``."""
    return np.logaddexp(0., f) - y * f


def deviance(y, f):
    """Mean Bernoulli deviance at log-odds ``f``."""
    return 2. * np.mean(bernoulli_loss(y, f))


def negative_gradient(y, f):
    return y - expit(f)


def expit(f):
    return np.exp(-np.logaddexp(0., -f))


def log_odds(y):
    y = np.asarray(y, dtype=float)
    if y.size == 0 or y.min() == y.max():
        raise DataError("gbm needs both outcome classes in the training rows")
    mean = y.mean()
    return np.log(mean / (1. - mean))


def as_rows(X, features=None, n_features=None):
    """CSR float matrix from a `SparseFeatureMatrix`, sparse or dense input.

    A `SparseFeatureMatrix` must carry exactly ``features``.
    """
    if hasattr(X, 'features'):
        if features is not None and tuple(X.features) != tuple(features):
            raise ValueError("rows are not indexed by the training dictionary")
        X = X.data
    X = scipy.sparse.csr_matrix(X, dtype=np.float64)
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError("expected %d feature columns, got %d"
                         % (n_features, X.shape[1]))
    return X


class RegressionTree(object):
    """One fitted tree: sklearn structure plus Newton leaf values.

    ``values`` holds the additive contribution (before shrinkage) for
    every node id; only leaf entries are ever looked up.
    """

    def __init__(self, estimator, values, iteration):
        self.estimator = estimator
        self.values = values
        self.iteration = iteration

    @property
    def n_leaves(self):
        return int(self.estimator.get_n_leaves())

    def split_improvements(self):
        """``(feature, improvement)`` for each internal node."""
        t = self.estimator.tree_
        internal = np.flatnonzero(t.children_left >= 0)
        left = t.children_left[internal]
        right = t.children_right[internal]
        w = t.weighted_n_node_samples
        sse = t.impurity * w
        improvement = sse[internal] - sse[left] - sse[right]
        return t.feature[internal], np.maximum(improvement, 0.)

    def predict(self, X):
        return self.values[self.estimator.apply(X.astype(np.float32))]


class GbmModel(object):

    family = FAMILY

    def __init__(self, f0, shrinkage, n_trees, max_depth, bag_fraction,
                 min_leaf, features=None, n_features=None):
        self.f0 = f0
        self.shrinkage = shrinkage
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.bag_fraction = bag_fraction
        self.min_leaf = min_leaf
        self.features = None if features is None else tuple(features)
        self.n_features = (len(self.features) if n_features is None
                           else n_features)
        self.trees = []
        self.train_deviance = []
        self.n_rejected = 0

    @property
    def hyper(self):
        return {'n_trees': self.n_trees, 'shrinkage': self.shrinkage,
                'max_depth': self.max_depth,
                'bag_fraction': self.bag_fraction,
                'min_leaf': self.min_leaf}

    def _rows(self, X):
        return as_rows(X, self.features, self.n_features)

    def decision_function(self, X):
        X = self._rows(X)
        f = np.full(X.shape[0], self.f0)
        for tree in self.trees:
            f += self.shrinkage * tree.predict(X)
        return f

    def staged_decision(self, X, stages):
        """Log-odds after each number of iterations in ``stages``."""
        X = self._rows(X)
        f = np.full(X.shape[0], self.f0)
        out = {}
        trees = iter(self.trees)
        tree = next(trees, None)
        for m in range(max(stages) + 1):
            if m in stages:
                out[m] = f.copy()
            while tree is not None and tree.iteration == m:
                f += self.shrinkage * tree.predict(X)
                tree = next(trees, None)
        return out

    def predict_proba(self, X):
        return np.clip(expit(self.decision_function(X)), EPS, 1. - EPS)

    def truncate(self, n_trees):
        """Model made of the first ``n_trees`` iterations."""
        model = GbmModel(self.f0, self.shrinkage, n_trees, self.max_depth,
                         self.bag_fraction, self.min_leaf,
                         features=self.features, n_features=self.n_features)
        model.trees = [t for t in self.trees if t.iteration < n_trees]
        model.train_deviance = self.train_deviance[:n_trees + 1]
        return model

    def influence(self):
        """Accumulated improvement per feature, averaged over iterations."""
        acc = np.zeros(self.n_features)
        for tree in self.trees:
            feature, improvement = tree.split_improvements()
            np.add.at(acc, feature, improvement)
        return acc / max(self.n_trees, 1)

    def screen(self):
        return set(np.flatnonzero(self.influence() > 0).tolist())


def relative_influence(model):
    """Nonzero influence per feature index, scaled so the maximum is 100.

    Ordered by decreasing influence, ties by feature index.
    """
    acc = model.influence()
    nonzero = np.flatnonzero(acc > 0)
    if nonzero.size == 0:
        return {}
    scaled = 100. * acc[nonzero] / acc[nonzero].max()
    order = np.lexsort((nonzero, -scaled))
    return {int(nonzero[i]): float(scaled[i]) for i in order}


def influence_table(model):
    """Relative influence with feature descriptors, for text export."""
    from ..tspm import describe
    rows = [(j, describe(model.features[j]) if model.features else str(j), v)
            for j, v in relative_influence(model).items()]
    return pd.DataFrame(rows, columns=['index', 'feature', 'influence'])


def _newton_leaves(tree, leaf, residual, p):
    hess = p * (1. - p)
    n_nodes = tree.tree_.node_count
    num = np.bincount(leaf, weights=residual, minlength=n_nodes)
    den = np.bincount(leaf, weights=hess, minlength=n_nodes)
    values = np.zeros(n_nodes)
    ok = den > 1e-300
    values[ok] = num[ok] / den[ok]
    return values


def fit_gbm(X, y, n_trees=100, shrinkage=0.1, max_depth=2,
            bag_fraction=0.5, min_leaf=10, seed=None, features=None):
    """Fit a boosted model; see the module docstring.

    Iterations that would raise the deviance on the full training set
    are discarded (with a warning), so the recorded training deviance
    never increases.
    """
    if not 0 < bag_fraction <= 1:
        raise ValueError("bag_fraction must be in (0, 1]")
    if hasattr(X, 'features') and features is None:
        features = X.features
    X = as_rows(X)
    y = np.asarray(y, dtype=float)
    if X.shape[0] != y.size or y.size == 0:
        raise ValueError("X and y must have the same, non-zero length")
    f0 = log_odds(y)
    model = GbmModel(f0, shrinkage, n_trees, max_depth, bag_fraction,
                     min_leaf, features=features, n_features=X.shape[1])
    rng = np.random.RandomState(seed)
    Xf = X.astype(np.float32).tocsc()
    n = y.size
    n_bag = max(int(np.floor(bag_fraction * n)), 1)

    f = np.full(n, f0)
    current = deviance(y, f)
    model.train_deviance.append(current)
    for m in range(n_trees):
        bag = np.sort(rng.permutation(n)[:n_bag]) if n_bag < n else (
            np.arange(n))
        tree_seed = rng.randint(np.iinfo(np.int32).max)
        p = expit(f[bag])
        residual = y[bag] - p
        est = DecisionTreeRegressor(max_depth=max_depth,
                                    min_samples_leaf=min_leaf,
                                    random_state=tree_seed)
        est.fit(Xf[bag], residual)
        if est.tree_.node_count == 1:
            model.train_deviance.append(current)
            continue
        values = _newton_leaves(est, est.apply(Xf[bag]), residual, p)
        tree = RegressionTree(est, values, m)
        f_new = f + shrinkage * tree.predict(X)
        new = deviance(y, f_new)
        if new > current:
            model.n_rejected += 1
            model.train_deviance.append(current)
            continue
        model.trees.append(tree)
        f, current = f_new, new
        model.train_deviance.append(current)

    if model.n_rejected > 0:
        warnings.warn("%d of %d boosting iterations rejected for raising "
                      "the training deviance" % (model.n_rejected, n_trees))
    assert all(a >= b for a, b in zip(model.train_deviance,
                                      model.train_deviance[1:]))
    return model


def stratified_folds(y, n_folds, seed):
    """Stratified fold indices, or None when a class is too small."""
    counts = np.bincount(np.asarray(y, dtype=int), minlength=2)
    n_splits = min(n_folds, counts.min())
    if n_splits < 2:
        return None
    skf = StratifiedKFold(n_splits=n_splits, shuffle=True,
                          random_state=seed)
    return list(skf.split(np.zeros(len(y)), y))


def fit_gbm_cv(X, y, params, n_folds, seed):
    """Choose the hyperparameter grid point by CV deviance, then refit.

    One model per (shrinkage, max_depth) and fold is grown to the
    largest ``n_trees``; smaller tree counts are read off its stages.
    Ties go to the earlier grid point.
    """
    features = X.features if hasattr(X, 'features') else None
    rows = as_rows(X)
    y = np.asarray(y, dtype=float)
    log_odds(y)
    grid_trees = sorted(set(params.n_trees))
    settings = list(itertools.product(params.shrinkage, params.max_depth))
    folds = stratified_folds(y, n_folds, seed)

    best = (params.shrinkage[0], params.max_depth[0], grid_trees[0])
    if folds is None:
        warnings.warn("too few positives for %d-fold CV; using the first "
                      "gbm grid point" % n_folds)
    else:
        with Timer() as t:
            scores = []
            for shrinkage, depth in settings:
                dev = np.zeros(len(grid_trees))
                for k, (train, valid) in enumerate(folds):
                    model = fit_gbm(rows[train], y[train],
                                    n_trees=grid_trees[-1],
                                    shrinkage=shrinkage, max_depth=depth,
                                    bag_fraction=params.bag_fraction,
                                    min_leaf=params.min_leaf,
                                    seed=(seed + k + 1) % 2**32)
                    staged = model.staged_decision(rows[valid], grid_trees)
                    dev += [deviance(y[valid], staged[m]) for m in grid_trees]
                scores.extend(((shrinkage, depth, m), d / len(folds))
                              for m, d in zip(grid_trees, dev))
            best = min(scores, key=lambda s: s[1])[0]
        log("gbm CV chose shrinkage=%g, max_depth=%d, n_trees=%d in %.3f "
            "seconds" % (best + (t.duration,)))

    shrinkage, depth, n_trees = best
    with Timer() as t:
        model = fit_gbm(rows, y, n_trees=n_trees, shrinkage=shrinkage,
                        max_depth=depth, bag_fraction=params.bag_fraction,
                        min_leaf=params.min_leaf, seed=seed,
                        features=features)
    log("gbm fit with %d trees in %.3f seconds" % (len(model.trees),
                                                  t.duration))
    return model
