"""Bagged variance-reduction regression trees."""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from ..exceptions import EmptyTrainingSet

_LEAF = -1


class _Tree:
    """Array-backed binary tree; node 0 is the root."""

    def __init__(self):
        self.feature, self.threshold = [], []
        self.left, self.right, self.value = [], [], []

    def add(self, value):
        self.feature.append(_LEAF)
        self.threshold.append(0.0)
        self.left.append(_LEAF)
        self.right.append(_LEAF)
        self.value.append(value)
        return len(self.value) - 1

    def freeze(self):
        self.feature = np.asarray(self.feature, dtype=np.intp)
        self.threshold = np.asarray(self.threshold)
        self.left = np.asarray(self.left, dtype=np.intp)
        self.right = np.asarray(self.right, dtype=np.intp)
        self.value = np.asarray(self.value)
        return self

    def predict(self, X):
        node = np.zeros(X.shape[0], dtype=np.intp)
        active = self.feature[node] != _LEAF
        while active.any():
            idx = np.flatnonzero(active)
            n = node[idx]
            go_left = X[idx, self.feature[n]] <= self.threshold[n]
            node[idx] = np.where(go_left, self.left[n], self.right[n])
            active[idx] = self.feature[node[idx]] != _LEAF
        return self.value[node]


def _best_split(X, y, features, min_leaf):
    n = y.size
    best = (0.0, None, None)
    total = y.sum()
    base = total * total / n
    for j in features:
        order = np.argsort(X[:, j], kind="stable")
        xs, ys = X[order, j], y[order]
        left_sum = np.cumsum(ys)[:-1]
        n_left = np.arange(1, n)
        gain = left_sum**2 / n_left + (total - left_sum) ** 2 / (n - n_left) - base
        valid = (xs[1:] > xs[:-1]) & (n_left >= min_leaf) & (n - n_left >= min_leaf)
        if not valid.any():
            continue
        gain = np.where(valid, gain, -np.inf)
        i = int(np.argmax(gain))
        if gain[i] > best[0]:
            best = (gain[i], j, 0.5 * (xs[i] + xs[i + 1]))
    return best[1], best[2]


def _grow(X, y, max_depth, min_leaf, max_features, rng):
    tree = _Tree()
    n_features = X.shape[1]
    stack = [(tree.add(float(y.mean())), np.arange(y.size), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if depth >= max_depth or idx.size < 2 * min_leaf:
            continue
        features = np.arange(n_features)
        if max_features < n_features:
            features = np.sort(rng.choice(n_features, max_features, replace=False))
        feat, thr = _best_split(X[idx], y[idx], features, min_leaf)
        if feat is None:
            continue
        mask = X[idx, feat] <= thr
        li, ri = idx[mask], idx[~mask]
        tree.feature[node], tree.threshold[node] = int(feat), float(thr)
        tree.left[node] = tree.add(float(y[li].mean()))
        tree.right[node] = tree.add(float(y[ri].mean()))
        stack.append((tree.right[node], ri, depth + 1))
        stack.append((tree.left[node], li, depth + 1))
    return tree.freeze()


class RandomForestRegressor(RegressorMixin, BaseEstimator):
    """Bootstrap-aggregated CART regression trees (squared-error splits).

    Leaves store means of training labels, so every prediction lies inside
    the training-label range.  ``max_depth=0`` gives one-leaf trees.
    """

    def __init__(self, n_trees=100, max_depth=10, min_samples_leaf=5, max_features=None,
                 bootstrap=True, random_state=0):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.random_state = random_state

    def fit(self, X, y):
        if len(y) == 0:
            raise EmptyTrainingSet("random forest needs at least one training sample")
        X, y = validate_data(self, X, y, reset=True, y_numeric=True)
        y = y.astype(np.float64)
        rng = np.random.default_rng(self.random_state)
        n, p = X.shape
        if self.max_features is None:
            max_features = p
        elif isinstance(self.max_features, float):
            max_features = max(1, int(round(self.max_features * p)))
        else:
            max_features = min(p, int(self.max_features))
        self.trees_ = []
        for _ in range(self.n_trees):
            idx = rng.integers(0, n, n) if self.bootstrap else np.arange(n)
            self.trees_.append(
                _grow(X[idx], y[idx], self.max_depth, self.min_samples_leaf, max_features, rng)
            )
        return self

    def predict(self, X):
        check_is_fitted(self, "trees_")
        X = validate_data(self, X, reset=False)
        total = np.zeros(X.shape[0])
        for tree in self.trees_:
            total += tree.predict(X)
        return total / len(self.trees_)


def fit_random_forest(features, labels, n_trees=100, max_depth=10, seed=0, **kwargs):
    return RandomForestRegressor(
        n_trees=n_trees, max_depth=max_depth, random_state=seed, **kwargs
    ).fit(features, labels)


def predict_forest(model, features):
    return model.predict(features)
