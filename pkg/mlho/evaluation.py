"""Discrimination and calibration metrics."""
import warnings
from collections import namedtuple

import numpy as np
from scipy import stats
from sklearn.metrics import auc as trapezoid_area, roc_curve

from .exceptions import DataError

EQUAL_WIDTH = 'equal-width'
QUANTILE = 'quantile'
SCHEMES = (EQUAL_WIDTH, QUANTILE)

RocCurve = namedtuple('RocCurve', ['fpr', 'tpr', 'thresholds', 'auc'])
CalibrationCurve = namedtuple(
    'CalibrationCurve', ['edges', 'mean_pred', 'obs_frac', 'count', 'scheme'])
MetricSummary = namedtuple(
    'MetricSummary', ['outcome', 'feature_class', 'mean', 'lower', 'upper',
                      'aucs'])


def _binary(scores, labels):
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be vectors of equal length")
    if not np.all((labels == 0) | (labels == 1)):
        raise ValueError("labels must be 0 or 1")
    return scores, labels.astype(bool)


def auc_score(scores, labels):
    """Mann-Whitney AUC: ``P(score_pos > score_neg) + P(tie) / 2``."""
    scores, labels = _binary(scores, labels)
    n_pos = labels.sum()
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUC needs both outcome classes in the test rows")
    ranks = stats.rankdata(scores)
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.
    return u / float(n_pos * n_neg)


def auc_roc(scores, labels):
    """ROC points at every distinct threshold, plus the rank AUC."""
    value = auc_score(scores, labels)
    fpr, tpr, thresholds = roc_curve(np.asarray(labels, dtype=int),
                                     np.asarray(scores, dtype=float),
                                     drop_intermediate=False)
    return RocCurve(fpr, tpr, thresholds, value)


def curve_area(curve):
    return trapezoid_area(curve.fpr, curve.tpr)


def mean_ci(values, level=0.95):
    """Mean with a Student t confidence interval across iterations."""
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise ValueError("need at least 2 values for a confidence interval")
    mean = values.mean()
    sem = values.std(ddof=1) / np.sqrt(values.size)
    half = stats.t.ppf(0.5 + level / 2., values.size - 1) * sem
    return mean, mean - half, mean + half


def summarize(outcome, feature_class, aucs, level=0.95):
    mean, lower, upper = mean_ci(aucs, level)
    return MetricSummary(outcome, feature_class, mean, lower, upper,
                         tuple(aucs))


def calibration_bins(scores, labels, n_bins=10, scheme=EQUAL_WIDTH):
    """Observed positive fraction per bin of predicted probability.

    ``equal-width`` bins split [0, 1] evenly. ``quantile`` bins hold
    equal numbers of patients (by score rank, so counts differ by at
    most one); their edges are the lowest score in each bin. Empty bins
    have count 0 and NaN means.
    """
    if n_bins < 2:
        raise ValueError("n_bins must be at least 2")
    if scheme not in SCHEMES:
        raise ValueError("scheme must be one of %s" % ", ".join(SCHEMES))
    scores, labels = _binary(scores, labels)

    if scheme == EQUAL_WIDTH:
        edges = np.linspace(0., 1., n_bins + 1)
        index = np.searchsorted(edges[1:-1], scores, side='right')
    else:
        order = np.argsort(scores, kind='mergesort')
        index = np.empty(scores.size, dtype=int)
        for b, members in enumerate(np.array_split(order, n_bins)):
            index[members] = b
        edges = np.array([scores[members].min() if members.size > 0
                          else np.nan
                          for members in np.array_split(order, n_bins)]
                         + [1.])

    count = np.bincount(index, minlength=n_bins)
    pred_sum = np.bincount(index, weights=scores, minlength=n_bins)
    pos_sum = np.bincount(index, weights=labels.astype(float),
                          minlength=n_bins)
    with np.errstate(invalid='ignore', divide='ignore'):
        mean_pred = np.where(count > 0, pred_sum / count, np.nan)
        obs_frac = np.where(count > 0, pos_sum / count, np.nan)
    n_empty = int(np.sum(count == 0))
    if n_empty > 0:
        warnings.warn("%d of %d calibration bins are empty"
                      % (n_empty, n_bins))
    return CalibrationCurve(edges, mean_pred, obs_frac, count, scheme)


def pooled_calibration(curves):
    """Count-weighted merge of curves binned with the same scheme."""
    curves = list(curves)
    if len(curves) == 0:
        raise ValueError("no calibration curves to pool")
    n_bins = curves[0].count.size
    if any(c.count.size != n_bins or c.scheme != curves[0].scheme
           for c in curves):
        raise ValueError("curves must share a scheme and bin count")
    count = sum(c.count for c in curves)
    pred = sum(np.nan_to_num(c.mean_pred) * c.count for c in curves)
    obs = sum(np.nan_to_num(c.obs_frac) * c.count for c in curves)
    with np.errstate(invalid='ignore', divide='ignore'):
        mean_pred = np.where(count > 0, pred / count, np.nan)
        obs_frac = np.where(count > 0, obs / count, np.nan)
    return CalibrationCurve(curves[0].edges, mean_pred, obs_frac, count,
                            curves[0].scheme)


def calibration_gap(curve):
    """Count-weighted mean ``|mean_pred - obs_frac|`` over populated bins."""
    full = curve.count > 0
    if not full.any():
        return np.nan
    gap = np.abs(curve.mean_pred[full] - curve.obs_frac[full])
    return float(np.average(gap, weights=curve.count[full]))
