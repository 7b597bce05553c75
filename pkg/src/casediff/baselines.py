"""Comparison systems: the training-mean predictor and a direct network regressor."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_seed_sequence, check_eval_set, check_features, check_training_data, check_vector
from .casebase import CaseBase
from .exceptions import ShapeError
from .nn import (
    DEFAULT_INNER_WIDTHS,
    MlpModel,
    NetworkSpec,
    TrainingConfig,
    fit,
    hidden_stack,
    load_checkpoint,
    mae,
    mse_loss,
    save_checkpoint,
)
from .nn.training import fold_output_affine, minibatches
from .retrieval import _as_casebase, _holdout


@dataclass(frozen=True)
class ConstantModel:
    value: float

    def predict(self, X):
        return np.full(len(np.atleast_2d(X)), self.value)


def fit_constant(cb_train: CaseBase) -> ConstantModel:
    if len(cb_train) == 0:
        raise ValueError("cannot fit a constant to an empty case base")
    return ConstantModel(math.fsum(cb_train.solutions) / len(cb_train))


@dataclass
class RegressorModel:
    network: MlpModel

    def __post_init__(self):
        if self.network.spec.output_dim != 1:
            raise ShapeError("regressor network must have a single output")

    @property
    def inner_spec(self):
        return self.network.spec.inner()

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        self.network.eval()
        return self.network.forward(X)[:, 0]


def regressor_spec(feature_dim, hidden_layers=None) -> NetworkSpec:
    hidden = hidden_stack(DEFAULT_INNER_WIDTHS) if hidden_layers is None else tuple(hidden_layers)
    return NetworkSpec(feature_dim, hidden, 1)


def train_regressor(
    cb_train: CaseBase,
    cb_val: CaseBase,
    hidden_layers=None,
    config: TrainingConfig = TrainingConfig(),
    seed=0,
    target_scaling=True,
):
    """MSE regression of solutions on features; the best-validation-MAE epoch wins.

    With ``target_scaling`` the network fits standardized solutions and the
    affine map back is folded into its output layer.
    """
    if len(cb_train) == 0 or len(cb_val) == 0:
        raise ValueError("regressor training needs non-empty training and validation sets")
    spec = regressor_spec(cb_train.feature_dim, hidden_layers)
    init_ss, order_ss, dropout_ss = as_seed_sequence(seed).spawn(3)
    X, y = cb_train.features, cb_train.solutions
    shift, scale = 0.0, 1.0
    if target_scaling:
        shift = float(np.mean(y))
        scale = float(np.std(y)) or 1.0
    y_scaled = ((y - shift) / scale)[:, None]
    network = MlpModel.initialize(spec, np.random.default_rng(init_ss))
    order_rng = np.random.default_rng(order_ss)

    def epoch_batches(epoch):
        for idx in minibatches(len(y), config.batch_size, order_rng):
            yield X[idx], (lambda out, t=y_scaled[idx]: mse_loss(out, t))

    def validate(net):
        return mae(net.forward(cb_val.features)[:, 0] * scale + shift, cb_val.solutions)

    best, log = fit(network, epoch_batches, validate, config, np.random.default_rng(dropout_ss))
    fold_output_affine(best, scale, shift)
    return RegressorModel(best), log


def predict_regressor(model: RegressorModel, features) -> float:
    x = check_vector(features, model.network.spec.input_dim, name="features")
    return float(model.predict(x)[0])


def save_regressor(path, model: RegressorModel, seed=None, selected_epoch=None):
    save_checkpoint(path, model.network, seed, selected_epoch)


def load_regressor(path) -> tuple[RegressorModel, dict]:
    network, meta = load_checkpoint(path)
    return RegressorModel(network), meta


class ConstantRegressor(RegressorMixin, BaseEstimator):
    """Predicts the mean training solution for every input."""

    def fit(self, X, y, eval_set=None):
        X, y = check_training_data(X, y)
        self.constant_ = fit_constant(_as_casebase(X, y)).value
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "constant_")
        X = check_features(X, self.n_features_in_)
        return np.full(X.shape[0], self.constant_)


class NeuralRegressor(RegressorMixin, BaseEstimator):
    """Feedforward regressor sharing its hidden stack with the difference adapter."""

    def __init__(
        self,
        hidden_widths=DEFAULT_INNER_WIDTHS,
        dropout_rate=0.2,
        epochs=50,
        learning_rate=1e-4,
        batch_size=32,
        target_scaling=True,
        validation_fraction=0.1,
        random_state=0,
    ):
        self.hidden_widths = hidden_widths
        self.dropout_rate = dropout_rate
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.target_scaling = target_scaling
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def fit(self, X, y, eval_set=None):
        X, y = check_training_data(X, y)
        eval_set = check_eval_set(eval_set, X.shape[1])
        X_fit, y_fit, eval_set = _holdout(X, y, eval_set, self.validation_fraction, self.random_state)
        self.model_, self.training_log_ = train_regressor(
            _as_casebase(X_fit, y_fit),
            _as_casebase(*eval_set, prefix="v"),
            hidden_stack(self.hidden_widths, self.dropout_rate),
            TrainingConfig(self.epochs, self.learning_rate, self.batch_size),
            seed=self.random_state,
            target_scaling=self.target_scaling,
        )
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        return self.model_.predict(check_features(X, self.n_features_in_))
