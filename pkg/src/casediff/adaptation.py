"""Case-difference adaptation: learn ``sol(x) - sol(y)`` from ``concat(f(x), f(y))``.

At query time the predicted difference between the query and the retrieved
case is added to the retrieved solution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import as_seed_sequence, check_eval_set, check_features, check_finite, check_training_data, check_vector
from .casebase import Case, CaseBase
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
from .nn.training import fold_output_affine
from .retrieval import _as_casebase, _holdout, l1_nearest


@dataclass(frozen=True)
class AdaptationPair:
    source: Case
    partner: Case

    @property
    def input(self) -> np.ndarray:
        return np.concatenate([self.source.features, self.partner.features])

    @property
    def target_delta(self) -> float:
        return self.source.solution - self.partner.solution


@dataclass
class AdapterModel:
    network: MlpModel
    feature_dim: int

    def __post_init__(self):
        if self.network.spec.input_dim != 2 * self.feature_dim or self.network.spec.output_dim != 1:
            raise ShapeError("adapter network must map 2 * feature_dim inputs to one output")

    @property
    def inner_spec(self):
        return self.network.spec.inner()

    def predict_deltas(self, query_features, retrieved_features) -> np.ndarray:
        Q = np.atleast_2d(np.asarray(query_features, dtype=np.float64))
        R = np.atleast_2d(np.asarray(retrieved_features, dtype=np.float64))
        if Q.shape != R.shape or Q.shape[1] != self.feature_dim:
            raise ShapeError(
                f"expected matching (n, {self.feature_dim}) inputs, got {Q.shape} and {R.shape}"
            )
        self.network.eval()
        return self.network.forward(np.hstack([Q, R]))[:, 0]


def _pick_partner(n, source, rng):
    j = int(rng.integers(n - 1))
    return j + (j >= source)


def make_training_pair(cb_train: CaseBase, source_index: int, rng) -> AdaptationPair:
    """Pair case ``source_index`` with a uniformly drawn different training case."""
    n = len(cb_train)
    if n < 2:
        raise ValueError("adaptation pairs need at least two training cases")
    return AdaptationPair(cb_train[source_index], cb_train[_pick_partner(n, source_index, rng)])


def validation_partners(cb_val: CaseBase, cb_train: CaseBase) -> np.ndarray:
    if len(cb_val) == 0 or len(cb_train) == 0:
        raise ValueError("validation pairing needs non-empty validation and training sets")
    return l1_nearest(cb_val.features, cb_train.features)[0]


def make_validation_pairs(cb_val: CaseBase, cb_train: CaseBase) -> list[AdaptationPair]:
    """Each validation case paired with its L1-nearest training case."""
    partners = validation_partners(cb_val, cb_train)
    return [AdaptationPair(cb_val[i], cb_train[int(j)]) for i, j in enumerate(partners)]


def adapter_spec(feature_dim, hidden_layers=None) -> NetworkSpec:
    hidden = hidden_stack(DEFAULT_INNER_WIDTHS) if hidden_layers is None else tuple(hidden_layers)
    return NetworkSpec(2 * feature_dim, hidden, 1)


class _PairEpoch:
    def __init__(self, X, y, batch_size, rng, scale):
        self.X, self.y, self.batch_size, self.rng, self.scale = X, y, batch_size, rng, scale
        self.pair_count = 0

    def __iter__(self):
        n = len(self.y)
        sources = self.rng.permutation(n)
        partners = np.array([_pick_partner(n, s, self.rng) for s in sources])
        self.pair_count = n
        for start in range(0, n, self.batch_size):
            s = sources[start : start + self.batch_size]
            p = partners[start : start + self.batch_size]
            inputs = np.hstack([self.X[s], self.X[p]])
            target = ((self.y[s] - self.y[p]) / self.scale)[:, None]
            yield inputs, (lambda out, t=target: mse_loss(out, t))


def train_adapter(
    cb_train: CaseBase,
    cb_val: CaseBase,
    hidden_layers=None,
    config: TrainingConfig = TrainingConfig(),
    seed=0,
    val_partners=None,
    target_scaling=True,
):
    """Train the difference network on fresh random pairs each epoch.

    Model selection uses the delta MAE on fixed validation pairs: by default
    each validation case with its L1-nearest training case, or the training
    indices given in ``val_partners``. With ``target_scaling`` the network
    fits deltas divided by ``sqrt(2) * std(train solutions)``; the scale is
    folded into the output layer afterwards.
    """
    if len(cb_train) < 2:
        raise ValueError("adapter training needs at least two training cases")
    d = cb_train.feature_dim
    spec = adapter_spec(d, hidden_layers)
    init_ss, pair_ss, dropout_ss = as_seed_sequence(seed).spawn(3)
    # partners are fixed before training starts and reused by every epoch
    partners = validation_partners(cb_val, cb_train) if val_partners is None else np.asarray(val_partners)
    if partners.shape != (len(cb_val),):
        raise ShapeError("need exactly one validation partner per validation case")
    val_inputs = np.hstack([cb_val.features, cb_train.features[partners]])
    val_deltas = cb_val.solutions - cb_train.solutions[partners]
    scale = 1.0
    if target_scaling:
        std = float(np.std(cb_train.solutions))
        scale = np.sqrt(2.0) * std if std > 0 else 1.0

    network = MlpModel.initialize(spec, np.random.default_rng(init_ss))
    pair_rng = np.random.default_rng(pair_ss)
    X, y = cb_train.features, cb_train.solutions

    def validate(net):
        return mae(net.forward(val_inputs)[:, 0] * scale, val_deltas)

    best, log = fit(
        network,
        lambda epoch: _PairEpoch(X, y, config.batch_size, pair_rng, scale),
        validate,
        config,
        np.random.default_rng(dropout_ss),
    )
    fold_output_affine(best, scale)
    return AdapterModel(best, d), log


def predict_delta(model: AdapterModel, query_features, retrieved_case: Case) -> float:
    q = check_vector(query_features, model.feature_dim, name="query")
    r = check_vector(retrieved_case.features, model.feature_dim, name="retrieved features")
    return float(model.predict_deltas(q, r)[0])


def save_adapter(path, model: AdapterModel, seed=None, selected_epoch=None):
    save_checkpoint(path, model.network, seed, selected_epoch, extra={"feature_dim": model.feature_dim})


def load_adapter(path) -> tuple[AdapterModel, dict]:
    """Load an adapter checkpoint; the 2 * feature_dim input wiring is re-validated."""
    network, meta = load_checkpoint(path)
    if "feature_dim" not in meta["extra"]:
        raise ValueError(f"{path}: not an adapter checkpoint (no feature_dim)")
    return AdapterModel(network, int(meta["extra"]["feature_dim"])), meta


def adapt(retrieved_solution: float, delta: float) -> float:
    """Apply a predicted ``sol(query) - sol(retrieved)`` to the retrieved solution."""
    check_finite(retrieved_solution, delta)
    return retrieved_solution + delta


class CaseDifferenceAdapter(BaseEstimator):
    """Estimator wrapper around :func:`train_adapter`.

    ``fit(X, y)`` learns from random pairs of the training rows;
    ``predict_delta(Q, R)`` returns the estimated ``sol(Q) - sol(R)`` row-wise.
    """

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

    def fit(self, X, y, eval_set=None, val_partners=None):
        X, y = check_training_data(X, y)
        eval_set = check_eval_set(eval_set, X.shape[1])
        X_fit, y_fit, eval_set = _holdout(X, y, eval_set, self.validation_fraction, self.random_state)
        self.model_, self.training_log_ = train_adapter(
            _as_casebase(X_fit, y_fit),
            _as_casebase(*eval_set, prefix="v"),
            hidden_stack(self.hidden_widths, self.dropout_rate),
            TrainingConfig(self.epochs, self.learning_rate, self.batch_size),
            seed=self.random_state,
            val_partners=val_partners,
            target_scaling=self.target_scaling,
        )
        self.n_features_in_ = X.shape[1]
        return self

    def predict_delta(self, query_features, retrieved_features):
        check_is_fitted(self, "model_")
        Q = check_features(query_features, self.n_features_in_)
        R = check_features(retrieved_features, self.n_features_in_)
        return self.model_.predict_deltas(Q, R)
