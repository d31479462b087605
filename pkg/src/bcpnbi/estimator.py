"""scikit-learn compatible front end.

:class:`BackwardConformalClassifier` works on softmax outputs from any
probabilistic classifier. ``fit`` scores a calibration set, ``predict``
returns budget-constrained prediction sets and ``predict_miscoverage``
returns per-input miscoverage estimates for those sets.

>>> est = BackwardConformalClassifier(budget=2).fit(P_cal, y_cal)   # doctest: +SKIP
>>> sets = est.predict(P_test)                                       # doctest: +SKIP
>>> alpha = est.predict_miscoverage(P_test)                          # doctest: +SKIP
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted, column_or_1d

from .budgetset import Budget, BatchSets, build_sets
from .conformal import CalibrationSet, Method, ScoreParams, bcp_alpha_batch, miscovered_batch, nme_alpha_batch
from .core import CostModel, normalize_rows
from .metrics import metric_brier


def check_probabilities(X, n_labels=None) -> np.ndarray:
    """Validate a softmax matrix and return it floored and renormalized."""
    X = check_array(X, dtype=np.float64, ensure_min_features=3)
    if n_labels is not None and X.shape[1] != n_labels:
        raise ValueError(f"X has {X.shape[1]} columns, expected {n_labels}")
    if np.any(X < 0):
        raise ValueError("probabilities must be nonnegative")
    if np.any(X.sum(axis=1) <= 0):
        raise ValueError("every row needs at least one positive entry")
    return normalize_rows(X)


class BackwardConformalClassifier(BaseEstimator):
    """Budget-constrained top-K sets with calibrated miscoverage estimates.

    Parameters
    ----------
    costs : array-like of shape (n_labels,), default=None
        Mitigation cost per label. The first two labels (no transmission,
        WiFi only) must cost 0. ``None`` gives every other label cost 1.
    budget : float, default=1.0
        Total cost the prediction set may consume.
    beta : float, default=1.0
        Exponent of the nonconformity score ``p ** -beta``.
    clip : bool, default=True
        Cap BCP estimates at 1.

    Attributes
    ----------
    calibration_ : CalibrationSet
    n_labels_ : int
    costs_ : ndarray of shape (n_labels,)
    """

    def __init__(self, costs=None, budget=1.0, beta=1.0, clip=True):
        self.costs = costs
        self.budget = budget
        self.beta = beta
        self.clip = clip

    def fit(self, X, y):
        X = check_probabilities(X)
        y = column_or_1d(y).astype(int, copy=False)
        if y.shape[0] != X.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
        n_labels = X.shape[1]
        if y.min() < 0 or y.max() >= n_labels:
            raise ValueError(f"labels must lie in [0, {n_labels - 1}]")
        if self.costs is None:
            costs = CostModel.uniform(n_labels - 2)
        else:
            costs = CostModel(tuple(np.ravel(self.costs)))
        if len(costs) != n_labels:
            raise ValueError(f"{len(costs)} costs for {n_labels} labels")
        Budget(self.budget)

        self.costs_ = costs.as_array()
        self.n_labels_ = n_labels
        self.n_features_in_ = n_labels
        self.calibration_ = CalibrationSet.from_arrays(X, y, ScoreParams(self.beta))
        return self

    def _sets(self, X):
        check_is_fitted(self, "calibration_")
        X = check_probabilities(X, self.n_labels_)
        return X, build_sets(X, self.costs_, self.budget)

    def prediction_sets(self, X) -> BatchSets:
        """Full set description: ordering, C_max, threshold and membership mask."""
        return self._sets(X)[1]

    def predict(self, X) -> np.ndarray:
        """Boolean membership matrix of shape (n_samples, n_labels)."""
        return self._sets(X)[1].mask

    def predict_point(self, X) -> np.ndarray:
        """Most likely label per row, ties to the smallest index."""
        check_is_fitted(self, "calibration_")
        return np.argmax(check_probabilities(X, self.n_labels_), axis=1)

    def predict_miscoverage(self, X, method="bcp") -> np.ndarray:
        X, sets = self._sets(X)
        method = Method(str(method).upper())
        if method is Method.BCP:
            return bcp_alpha_batch(X, sets, self.calibration_, clip=self.clip)
        return nme_alpha_batch(X, sets)

    def miscoverage(self, X, y) -> np.ndarray:
        """1 where the prediction set misses the true label."""
        _, sets = self._sets(X)
        return miscovered_batch(sets, column_or_1d(y))

    def score(self, X, y, method="bcp") -> float:
        """Negative Brier score of the miscoverage estimates (higher is better)."""
        X, sets = self._sets(X)
        alpha = self.predict_miscoverage(X, method=method)
        return -metric_brier(alpha, miscovered_batch(sets, column_or_1d(y)))
