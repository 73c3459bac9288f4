"""Elastic-net penalized logistic regression.

Minimizes, over the intercept ``b0`` and coefficients ``b`` on
standardized features,

    -(1/n) loglik(b0, b) + lam * ((1 - alpha) / 2 * |b|_2^2 + alpha * |b|_1)

along a decreasing path of ``lam`` with warm starts. Each ``lam`` is
solved by iteratively reweighted least squares whose quadratic
subproblems are solved by cyclic coordinate descent, with a backtracking
step on the penalized objective so every outer step descends.
"""
import warnings

import numpy as np
import pandas as pd
import scipy.sparse
from nengo.utils.stdlib import Timer

from ..exceptions import DataError
from ..utils import log
from .gbm import EPS, as_rows, deviance, expit, log_odds, stratified_folds

FAMILY = 'elastic_net'
# Minimum IRLS weight; keeps the quadratic model bounded near p = 0 or 1
MIN_WEIGHT = 1e-5
# Threshold inflation that keeps exact ties (e.g. duplicate columns) at 0
TIE_INFLATE = 1 + 1e-9
# Standardized coefficients below ZERO_SCALE * tol are set to exactly 0
ZERO_SCALE = 1e3


def soft_threshold(z, t):
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.)


class Standardizer(object):
    """Column means and population standard deviations of training rows.

    Columns with zero spread (or masked out) get scale 0 and never enter
    the model.
    """

    def __init__(self, X, mask=None):
        X = np.asarray(X, dtype=float)
        self.mean = X.mean(axis=0)
        self.scale = X.std(axis=0)
        self.scale[self.scale < 1e-12] = 0.
        if mask is not None:
            self.scale[mask] = 0.
        self.usable = self.scale > 0

    def transform(self, X):
        X = np.asarray(X, dtype=float)
        Z = np.zeros_like(X)
        u = self.usable
        Z[:, u] = (X[:, u] - self.mean[u]) / self.scale[u]
        return Z


def penalty(beta, lam, alpha):
    return lam * (0.5 * (1. - alpha) * np.dot(beta, beta)
                  + alpha * np.abs(beta).sum())


def objective(Z, y, b0, beta, lam, alpha):
    eta = b0 + Z.dot(beta)
    return 0.5 * deviance(y, eta) + penalty(beta, lam, alpha)


def scores(Z, y, b0, beta):
    """Gradient of the mean log likelihood per standardized column."""
    return Z.T.dot(y - expit(b0 + Z.dot(beta))) / float(y.size)


def lambda_max(Z, y, alpha):
    """Smallest ``lam`` at which every coefficient is exactly zero.

    Infinite for ``alpha = 0``: a pure ridge penalty never zeroes a
    coefficient.
    """
    if Z.shape[1] == 0:
        return 0.
    if alpha <= 0:
        return np.inf
    return np.abs(Z.T.dot(y - y.mean())).max() / (y.size * alpha)


def _cd_weighted(Z, w, z, b0, beta, active, lam, alpha, tol, max_iter):
    """Coordinate descent on the IRLS quadratic over ``active`` columns."""
    n = float(z.size)
    beta = beta.copy()
    r = z - b0 - Z.dot(beta)
    wsum = w.sum()
    h = (w[:, None] * Z[:, active] ** 2).sum(axis=0) / n
    for _ in range(max_iter):
        max_delta = 0.
        d0 = np.dot(w, r) / wsum
        b0 += d0
        r -= d0
        for k, j in enumerate(active):
            old = beta[j]
            g = np.dot(w * Z[:, j], r) / n + h[k] * old
            new = soft_threshold(g, lam * alpha * TIE_INFLATE) / (
                h[k] + lam * (1. - alpha))
            if new != old:
                r -= (new - old) * Z[:, j]
                beta[j] = new
                max_delta = max(max_delta, h[k] * (new - old) ** 2)
        if max_delta < tol:
            break
    return b0, beta


def _solve(Z, y, b0, beta, active, lam, alpha, tol, max_iter):
    """Penalized logistic fit at one ``lam`` from a warm start."""
    obj = objective(Z, y, b0, beta, lam, alpha)
    for _ in range(max_iter):
        eta = b0 + Z.dot(beta)
        p = expit(eta)
        w = np.maximum(p * (1. - p), MIN_WEIGHT)
        z = eta + (y - p) / w
        new_b0, new_beta = _cd_weighted(Z, w, z, b0, beta, active, lam,
                                        alpha, tol, max_iter)
        step = 1.
        for _ in range(30):
            cand_b0 = b0 + step * (new_b0 - b0)
            cand_beta = beta + step * (new_beta - beta)
            cand = objective(Z, y, cand_b0, cand_beta, lam, alpha)
            if cand <= obj + 1e-14 * abs(obj):
                break
            step *= 0.5
        else:
            break
        change = max(abs(cand_b0 - b0), np.abs(cand_beta - beta).max())
        b0, beta, improvement = cand_b0, cand_beta, obj - cand
        obj = cand
        if change < np.sqrt(tol) * 1e-2 or improvement < tol * 1e-2:
            break
    return b0, beta


def fit_path(Z, y, lambdas, alpha, tol=1e-10, max_iter=1000):
    """Solutions ``(b0, beta)`` for each ``lam`` in decreasing ``lambdas``.

    Uses the sequential strong rule to pick the active set, then checks
    the optimality conditions on all columns and refits if any fail.
    """
    n, p = Z.shape
    usable = np.flatnonzero(np.any(Z != 0, axis=0))
    b0 = log_odds(y)
    beta = np.zeros(p)
    lmax = lambda_max(Z, y, alpha)
    prev_lam = min(lmax, lambdas[0]) if len(lambdas) else lmax
    path = []
    for lam in lambdas:
        if lam >= lmax:
            path.append((log_odds(y), np.zeros(p)))
            prev_lam = lam
            continue
        grad = np.abs(scores(Z, y, b0, beta))
        strong = usable[(grad[usable] >= alpha * (2 * lam - prev_lam))
                        | (beta[usable] != 0)]
        active = strong
        while True:
            b0, beta = _solve(Z, y, b0, beta, active, lam, alpha, tol,
                              max_iter)
            grad = np.abs(scores(Z, y, b0, beta))
            inactive = np.setdiff1d(usable, active)
            violators = inactive[grad[inactive] > lam * alpha * (1 + 1e-6)]
            if violators.size == 0:
                break
            active = np.union1d(active, violators)
        # rounding leftovers, e.g. the second of two identical columns
        beta[np.abs(beta) < ZERO_SCALE * tol] = 0.
        path.append((b0, beta.copy()))
        prev_lam = lam
    return path


def lambda_path(Z, y, alpha, n_lambdas, min_ratio):
    # ridge-heavy paths start where a 1e-3 mix would zero everything
    lmax = lambda_max(Z, y, max(alpha, 1e-3))
    if lmax <= 0:
        return np.array([1.])
    return np.exp(np.linspace(np.log(lmax), np.log(lmax * min_ratio),
                              n_lambdas))


class ElasticNetModel(object):

    family = FAMILY

    def __init__(self, standardizer, b0, beta, lam, alpha, features=None,
                 lambdas=None, path_l1=None):
        self.standardizer = standardizer
        self.b0_std = b0
        self.beta_std = beta
        self.lam = lam
        self.alpha = alpha
        self.features = None if features is None else tuple(features)
        self.n_features = beta.size
        self.lambdas = lambdas
        self.path_l1 = path_l1

        s = standardizer
        self.coef = np.zeros(beta.size)
        self.coef[s.usable] = beta[s.usable] / s.scale[s.usable]
        self.intercept = b0 - np.dot(self.coef, s.mean)

    @property
    def hyper(self):
        return {'alpha': self.alpha, 'lambda': self.lam}

    def decision_function(self, X):
        X = as_rows(X, self.features, self.n_features)
        return self.intercept + X.dot(self.coef)

    def predict_proba(self, X):
        return np.clip(expit(self.decision_function(X)), EPS, 1. - EPS)

    def screen(self):
        return set(np.flatnonzero(self.coef != 0).tolist())

    def kkt_residuals(self, X, y):
        """Violation of the optimality conditions per feature.

        Zero coefficients need ``|score| <= lam * alpha``; nonzero ones
        need ``score = lam * alpha * sign(b) + lam * (1 - alpha) * b``.
        """
        Z = self.standardizer.transform(_dense(X))
        g = scores(Z, np.asarray(y, dtype=float), self.b0_std,
                   self.beta_std)
        b = self.beta_std
        res = np.where(
            b == 0,
            np.maximum(np.abs(g) - self.lam * self.alpha, 0.),
            np.abs(g - self.lam * self.alpha * np.sign(b)
                   - self.lam * (1. - self.alpha) * b))
        res[~self.standardizer.usable] = 0.
        return res


def coefficient_table(model):
    from ..tspm import describe
    nz = np.flatnonzero(model.coef)
    rows = [('(intercept)', model.intercept)] + [
        (describe(model.features[j]) if model.features else str(j),
         model.coef[j]) for j in nz]
    return pd.DataFrame(rows, columns=['feature', 'coefficient'])


def _dense(X):
    if hasattr(X, 'features'):
        X = X.data
    if scipy.sparse.issparse(X):
        X = X.toarray()
    return np.asarray(X, dtype=float)


def fit_elastic_net(X, y, alpha=0.5, lambdas=None, n_lambdas=50,
                    min_ratio=1e-3, n_folds=5, seed=0, tol=1e-10,
                    max_iter=1000, exclude=None, features=None):
    """Fit along a ``lam`` path and keep the CV-deviance minimizer.

    ``exclude`` masks columns kept out of the model (e.g. reference
    levels of one-hot fields). With ``n_folds`` below 2 the smallest
    ``lam`` on the path is used.
    """
    if not 0 <= alpha <= 1:
        raise ValueError("alpha must be in [0, 1]")
    if hasattr(X, 'features') and features is None:
        features = X.features
    X = _dense(X)
    y = np.asarray(y, dtype=float)
    if X.shape[0] != y.size or y.size == 0:
        raise ValueError("X and y must have the same, non-zero length")
    if y.min() == y.max():
        raise DataError("elastic net needs both outcome classes in the "
                        "training rows")

    std = Standardizer(X, mask=exclude)
    Z = std.transform(X)
    if lambdas is None:
        lambdas = lambda_path(Z, y, alpha, n_lambdas, min_ratio)
    lambdas = np.sort(np.asarray(lambdas, dtype=float))[::-1]

    folds = stratified_folds(y, n_folds, seed) if n_folds >= 2 else None
    if folds is None:
        if n_folds >= 2:
            warnings.warn("too few positives for %d-fold CV; using the "
                          "smallest lambda" % n_folds)
        best = lambdas.size - 1
    else:
        with Timer() as t:
            cv_dev = np.zeros(lambdas.size)
            for train, valid in folds:
                if y[train].min() == y[train].max():
                    raise DataError("a CV fold lacks one outcome class")
                fold_std = Standardizer(X[train], mask=exclude)
                Zt = fold_std.transform(X[train])
                Zv = fold_std.transform(X[valid])
                path = fit_path(Zt, y[train], lambdas, alpha, tol, max_iter)
                cv_dev += [deviance(y[valid], b0 + Zv.dot(beta))
                           for b0, beta in path]
            cv_dev /= len(folds)
            best = int(np.argmin(cv_dev))
        log("elastic net CV chose lambda=%.4g (%d of %d) in %.3f seconds"
            % (lambdas[best], best + 1, lambdas.size, t.duration))

    with Timer() as t:
        path = fit_path(Z, y, lambdas[:best + 1], alpha, tol, max_iter)
    b0, beta = path[-1]
    model = ElasticNetModel(std, b0, beta, lambdas[best], alpha,
                            features=features, lambdas=lambdas[:best + 1],
                            path_l1=np.array([np.abs(b).sum()
                                              for _, b in path]))
    log("elastic net fit with %d nonzero coefficients in %.3f seconds"
        % (len(model.screen()), t.duration))
    return model
