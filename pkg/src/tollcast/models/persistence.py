"""Persistence baseline: the current value carried forward unchanged."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted


class PersistenceRegressor(BaseEstimator, RegressorMixin):
    """Reports the designated current-value column for every horizon.

    `feature_index` names the column carrying the current value of the
    target quantity (toll now, or the current travel-time difference);
    predictions are identical at every horizon by construction.
    """

    def __init__(self, feature_index=0):
        self.feature_index = feature_index

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        if not 0 <= self.feature_index < X.shape[1]:
            raise ValueError(
                f"feature_index {self.feature_index} outside 0..{X.shape[1] - 1}"
            )
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X, dtype=np.float64)
        return X[:, self.feature_index].astype(float)


def to_payload(est: PersistenceRegressor):
    check_is_fitted(est, "n_features_in_")
    meta = {
        "feature_index": est.feature_index,
        "n_features_in": est.n_features_in_,
    }
    return {}, meta


def from_payload(arrays, meta) -> PersistenceRegressor:
    est = PersistenceRegressor(feature_index=int(meta["feature_index"]))
    est.n_features_in_ = int(meta["n_features_in"])
    return est
