"""Summary features of a quadrature window for the tree and SVR baselines."""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import validate_data

FEATURE_NAMES = (
    "central_m2",
    "central_m3",
    "central_m4",
    "abs_moment_1",
    "min",
    "max",
    "lag1_autocorr",
    "spectral_centroid",
)


def summary_features(windows):
    """Eight per-window statistics, one row per window."""
    X = np.atleast_2d(np.asarray(windows, dtype=np.float64))
    d = X - X.mean(axis=1, keepdims=True)
    d2 = d * d
    m2 = d2.mean(axis=1)
    m3 = (d2 * d).mean(axis=1)
    m4 = (d2 * d2).mean(axis=1)
    abs1 = np.abs(d).mean(axis=1)
    lag1 = (d[:, 1:] * d[:, :-1]).sum(axis=1) / np.where(m2 > 0, d2.sum(axis=1), 1.0)
    power = np.abs(np.fft.rfft(d, axis=1)) ** 2
    freqs = np.fft.rfftfreq(X.shape[1])
    total = power.sum(axis=1)
    centroid = (power @ freqs) / np.where(total > 0, total, 1.0)
    return np.column_stack([m2, m3, m4, abs1, X.min(axis=1), X.max(axis=1), lag1, centroid])


class SummaryFeatures(TransformerMixin, BaseEstimator):
    def fit(self, X, y=None):
        validate_data(self, X, reset=True)
        return self

    def transform(self, X):
        X = validate_data(self, X, reset=False)
        return summary_features(X)

    def get_feature_names_out(self, input_features=None):
        return np.asarray(FEATURE_NAMES, dtype=object)
