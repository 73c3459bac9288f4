"""Binary classifiers used by the pipeline.

Every fitted model exposes ``predict_proba(X)``, ``screen()`` (the
features it actually uses), ``features`` and a ``family`` label.
"""
import dill

from ..exceptions import ConfigError, DataError
from ..tspm import reference_levels
from .elasticnet import ElasticNetModel, fit_elastic_net
from .gbm import GbmModel, fit_gbm, fit_gbm_cv, relative_influence

MODEL_FORMAT = 'mlho-model'
MODEL_VERSION = 1


def _fit_gbm(X, y, config, seed, n_folds):
    return fit_gbm_cv(X, y, config.gbm, n_folds, seed)


def _fit_elastic_net(X, y, config, seed, n_folds):
    p = config.elastic_net
    exclude = reference_levels(X.features) if hasattr(X, 'features') else (
        None)
    return fit_elastic_net(X, y, alpha=p.alpha, n_lambdas=p.n_lambdas,
                           min_ratio=p.lambda_min_ratio, n_folds=n_folds,
                           seed=seed, tol=p.tol, max_iter=p.max_iter,
                           exclude=exclude)


registry = {
    'gbm': _fit_gbm,
    'elastic_net': _fit_elastic_net,
}


def fit_learner(name, X, y, config, seed, n_folds):
    """Fit learner ``name`` with hyperparameters chosen by CV on X."""
    if name not in registry:
        raise ConfigError("Unknown learner '%s'; choose from %s"
                          % (name, ", ".join(sorted(registry))))
    return registry[name](X, y, config, seed, n_folds)


def embedded_feature_screen(model):
    """Indices of the features a fitted model relies on."""
    return model.screen()


def save_model(model, path):
    with open(path, 'wb') as fp:
        dill.dump({'format': MODEL_FORMAT, 'version': MODEL_VERSION,
                   'model': model}, fp)


def load_model(path):
    with open(path, 'rb') as fp:
        data = dill.load(fp)
    if not isinstance(data, dict) or data.get('format') != MODEL_FORMAT:
        raise DataError("%s is not a saved mlho model" % path)
    if data['version'] != MODEL_VERSION:
        raise DataError("unsupported model version %s" % data['version'])
    return data['model']


__all__ = ['ElasticNetModel', 'GbmModel', 'embedded_feature_screen',
           'fit_elastic_net', 'fit_gbm', 'fit_learner', 'load_model',
           'registry', 'relative_influence', 'save_model']
