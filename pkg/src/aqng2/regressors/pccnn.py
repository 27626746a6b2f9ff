"""Photon-correlation CNN: a 1-D convolutional regressor from windows to g2(0)."""

from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .._validation import check_windows
from ..exceptions import EmptySplit, ShapeMismatch
from ..homodyne import G2Estimate, Method
from ..seeding import INIT, SHUFFLE, derive_seed
from .adam import AdamState, TrainConfig, adam_step
from .dataset import normalization_of
from .network import (
    DEFAULT_LAYERS,
    PccnnModel,
    backward_batch,
    fold_input_affine,
    forward_batch,
    init_parameters,
    predict_raw,
)

# float32 halves the cost of every batch; the master copy of the weights and
# the Adam moments stay float64
COMPUTE_DTYPE = np.float32


@dataclass
class LossTrace:
    train: list = field(default_factory=list)
    validation: list = field(default_factory=list)


def _mse(model, theta, x, y, batch_size=512):
    total = 0.0
    for start in range(0, x.shape[0], batch_size):
        pred = forward_batch(model.layer_spec, model.slots, theta, x[start : start + batch_size])
        total += float(np.sum((pred.astype(np.float64) - y[start : start + batch_size]) ** 2))
    return total / x.shape[0]


def train(model, train_x, train_y, val_x, val_y, config, state=None, callback=None,
          restore_best=False):
    """Minibatch MSE training with Adam.

    ``train_x``/``val_x`` are standardised windows.  The batch order comes
    from a permutation drawn once per epoch from ``config.seed``.  Returns
    ``(model, state, trace)``; the returned model holds float32 weights,
    taken from the epoch with the lowest validation loss when
    ``restore_best`` is set (the Adam state is always the final one).
    """
    if len(train_y) == 0:
        raise EmptySplit("training split is empty")
    if len(val_y) == 0:
        raise EmptySplit("validation split is empty")
    train_x = check_windows(train_x, model.input_len, dtype=COMPUTE_DTYPE)
    val_x = check_windows(val_x, model.input_len, dtype=COMPUTE_DTYPE)
    train_y = np.asarray(train_y, dtype=np.float64)
    val_y = np.asarray(val_y, dtype=np.float64)

    theta = np.asarray(model.parameters, dtype=np.float64).copy()
    state = state or AdamState.zeros(theta.size)
    rng = np.random.default_rng(derive_seed(config.seed, SHUFFLE))
    trace = LossTrace()
    n = train_y.size
    best, best_theta = np.inf, theta.copy()
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        running = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            pred, cache = forward_batch(model.layer_spec, model.slots, theta, train_x[idx], keep_cache=True)
            resid = pred.astype(np.float64) - train_y[idx]
            running += float(resid @ resid)
            dy = (2.0 / idx.size * resid).astype(COMPUTE_DTYPE)
            grad = backward_batch(model.layer_spec, model.slots, theta, cache, dy)
            theta, state = adam_step(theta, grad, state, config)
        trace.train.append(running / n)
        trace.validation.append(_mse(model, theta, val_x, val_y))
        if trace.validation[-1] < best:
            best, best_theta = trace.validation[-1], theta.copy()
        if callback is not None:
            callback(epoch, trace)
    if restore_best and trace.validation:
        theta = best_theta
    trained = replace(model, parameters=theta.astype(np.float32))
    return trained, state, trace


def predict_batch(model, windows, normalization=(0.0, 1.0)):
    """One :class:`G2Estimate` per window, order preserved."""
    windows = np.asarray(windows, dtype=np.float64)
    if windows.size == 0:
        return []
    x = _standardize(windows, normalization, model.input_len)
    return [
        G2Estimate(float(v), float("nan"), model.input_len, Method.PCCNN)
        for v in predict_raw(model, x, dtype=COMPUTE_DTYPE)
    ]


def _standardize(windows, normalization, input_len):
    x = check_windows(windows, input_len)
    mean, scale = normalization
    return ((x - mean) / scale).astype(COMPUTE_DTYPE)


class PCCNNRegressor(RegressorMixin, BaseEstimator):
    """Convolutional g2(0) regressor on raw quadrature windows.

    ``fit`` computes a z-score normalisation from the training windows,
    initialises the weights (Glorot-uniform, output bias at the mean label)
    and trains with Adam on the squared error.  Without ``X_val`` a
    ``validation_fraction`` of the training windows is held out.  With
    ``restore_best`` the weights of the best validation epoch are kept.
    """

    def __init__(self, layers=None, learning_rate=1e-3, batch_size=64, epochs=200,
                 beta1=0.9, beta2=0.999, epsilon=1e-8, validation_fraction=0.1,
                 restore_best=True, random_state=0, verbose=0):
        self.layers = layers
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.validation_fraction = validation_fraction
        self.restore_best = restore_best
        self.random_state = random_state
        self.verbose = verbose

    def train_config(self):
        return TrainConfig(self.learning_rate, self.batch_size, self.epochs,
                           self.beta1, self.beta2, self.epsilon, self.random_state)

    def fit(self, X, y, X_val=None, y_val=None):
        X = check_windows(X)
        y = np.asarray(y, dtype=np.float64)
        if X.shape[0] != y.size:
            raise ShapeMismatch("X and y have different numbers of rows")
        if X_val is None:
            n_val = max(1, int(round(self.validation_fraction * y.size)))
            split = np.random.default_rng(self.random_state).permutation(y.size)
            X, X_val = X[split[n_val:]], X[split[:n_val]]
            y, y_val = y[split[n_val:]], y[split[:n_val]]
        if y.size == 0:
            raise EmptySplit("training split is empty")
        self.n_features_in_ = X.shape[1]
        self.normalization_ = normalization_of(X)
        layers = DEFAULT_LAYERS if self.layers is None else self.layers
        model = PccnnModel(layers, X.shape[1])
        theta = init_parameters(model.layer_spec, model.input_len, derive_seed(self.random_state, INIT))
        slot = model.slots[-1]
        if slot.bias_size:
            theta[slot.offset + slot.weight_size :] = y.mean()
        model = replace(model, parameters=theta)

        def report(epoch, trace):
            if self.verbose and (epoch % self.verbose == 0 or epoch == self.epochs - 1):
                print(f"epoch {epoch:4d}  train {trace.train[-1]:.5f}  val {trace.validation[-1]:.5f}", flush=True)

        self.model_, self.optimizer_state_, trace = train(
            model,
            _standardize(X, self.normalization_, model.input_len), y,
            _standardize(X_val, self.normalization_, model.input_len), y_val,
            self.train_config(), callback=report, restore_best=self.restore_best,
        )
        self.loss_curve_ = trace.train
        self.validation_loss_curve_ = trace.validation
        return self

    def predict(self, X):
        """Predicted g2 per window; the normalisation is folded into the first layer when possible."""
        check_is_fitted(self, "model_")
        folded = fold_input_affine(self.model_, *self.normalization_)
        if folded is None:
            x = _standardize(X, self.normalization_, self.model_.input_len)
            return predict_raw(self.model_, x, dtype=COMPUTE_DTYPE, validate=False)
        x = check_windows(X, folded.input_len, dtype=COMPUTE_DTYPE)
        return predict_raw(folded, x, dtype=COMPUTE_DTYPE, validate=False)

    def predict_estimates(self, X):
        check_is_fitted(self, "model_")
        return predict_batch(self.model_, X, self.normalization_)

    @classmethod
    def from_checkpoint(cls, model, state, config, normalization):
        est = cls(layers=model.layer_spec, learning_rate=config.learning_rate,
                  batch_size=config.batch_size, epochs=config.epochs, beta1=config.adam_beta1,
                  beta2=config.adam_beta2, epsilon=config.adam_epsilon, random_state=config.seed)
        est.model_, est.optimizer_state_ = model, state
        est.normalization_ = tuple(normalization)
        est.n_features_in_ = model.input_len
        est.loss_curve_, est.validation_loss_curve_ = [], []
        return est
