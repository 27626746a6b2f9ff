"""Linear epsilon-insensitive support vector regression.

Solved in the primal by subgradient descent on::

    J(w, b) = ||w||^2 / (2 C n) + mean(max(0, |y - X w - b| - epsilon))

(the usual ``||w||^2 / 2 + C * sum(loss)`` scaled by ``1 / (C n)``), with
step size ``eta0 / sqrt(t)`` and Polyak averaging of the iterates.  The
averaged iterate is the fitted model.
"""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from ..exceptions import EmptyTrainingSet


def svr_objective(w, b, X, y, c, epsilon):
    resid = y - X @ w - b
    loss = np.maximum(0.0, np.abs(resid) - epsilon).mean()
    return float(w @ w / (2.0 * c * y.size) + loss)


class LinearSVR(RegressorMixin, BaseEstimator):
    def __init__(self, c=1.0, epsilon_tube=0.05, n_iter=2000, eta0=1.0, batch_size=None,
                 random_state=0):
        self.c = c
        self.epsilon_tube = epsilon_tube
        self.n_iter = n_iter
        self.eta0 = eta0
        self.batch_size = batch_size
        self.random_state = random_state

    def fit(self, X, y):
        if len(y) == 0:
            raise EmptyTrainingSet("SVR needs at least one training sample")
        X, y = validate_data(self, X, y, reset=True, y_numeric=True)
        y = y.astype(np.float64)
        n, p = X.shape
        rng = np.random.default_rng(self.random_state)
        lam = 1.0 / (self.c * n)
        w, b = np.zeros(p), 0.0
        w_avg, b_avg = np.zeros(p), 0.0
        self.objective_curve_ = []
        for t in range(1, self.n_iter + 1):
            if self.batch_size is None:
                Xb, yb = X, y
            else:
                idx = rng.integers(0, n, self.batch_size)
                Xb, yb = X[idx], y[idx]
            resid = yb - Xb @ w - b
            s = np.where(np.abs(resid) > self.epsilon_tube, np.sign(resid), 0.0)
            grad_w = lam * w - Xb.T @ s / yb.size
            grad_b = -s.mean()
            eta = self.eta0 / np.sqrt(t)
            w = w - eta * grad_w
            b = b - eta * grad_b
            w_avg += (w - w_avg) / t
            b_avg += (b - b_avg) / t
            self.objective_curve_.append(svr_objective(w_avg, b_avg, X, y, self.c, self.epsilon_tube))
        self.coef_, self.intercept_ = w_avg, float(b_avg)
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = validate_data(self, X, reset=False)
        return X @ self.coef_ + self.intercept_


def fit_svr(features, labels, c=1.0, epsilon_tube=0.05, seed=0, **kwargs):
    return LinearSVR(c=c, epsilon_tube=epsilon_tube, random_state=seed, **kwargs).fit(features, labels)


def predict_svr(model, features):
    return model.predict(features)
