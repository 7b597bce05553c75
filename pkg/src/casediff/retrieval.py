"""Nearest-case retrieval: raw-feature L1 and a triplet-trained Siamese embedder."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import (
    as_seed_sequence,
    check_eval_set,
    check_features,
    check_training_data,
    check_vector,
)
from .casebase import Case, CaseBase
from .exceptions import ShapeError
from .nn import (
    MlpModel,
    NetworkSpec,
    TrainingConfig,
    TripletLossParams,
    fit,
    hidden_stack,
    load_checkpoint,
    mae,
    save_checkpoint,
    triplet_margin_loss,
)


@dataclass(frozen=True)
class RetrievalResult:
    case_index: int
    distance: float
    retrieved_solution: float


def l1_distance(x, y) -> float:
    x = check_vector(x, name="x")
    y = check_vector(y, len(x), name="y")
    return math.fsum(np.abs(x - y).tolist())


def l1_nearest(queries, reference, chunk_elements=1 << 22):
    """Index and L1 distance of the nearest ``reference`` row for every query row.

    Distances are correctly rounded exact sums. Rows whose vectorized sum lies
    within rounding error of the minimum are re-scored exactly, so ties go to
    the lowest reference index even when summation order would split them.
    """
    Q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    R = np.asarray(reference, dtype=np.float64)
    if R.ndim != 2 or R.shape[0] == 0:
        raise ValueError("reference set is empty")
    if Q.shape[1] != R.shape[1]:
        raise ShapeError(f"query dimension {Q.shape[1]} != reference dimension {R.shape[1]}")
    step = max(1, chunk_elements // max(1, R.size))
    idx = np.empty(Q.shape[0], dtype=np.intp)
    dist = np.empty(Q.shape[0])
    # a float sum of d non-negative terms is within d * eps (relative) of the exact one
    slack = 2.0 * Q.shape[1] * np.finfo(np.float64).eps
    band = (1.0 + slack) / (1.0 - slack)
    for start in range(0, Q.shape[0], step):
        block = np.abs(Q[start : start + step, None, :] - R[None, :, :]).sum(axis=2)
        for k, row in enumerate(block):
            candidates = np.flatnonzero(row <= row.min() * band)
            q = Q[start + k]
            exact = [math.fsum(np.abs(q - R[j]).tolist()) for j in candidates]
            # candidates are ascending, so index() keeps the lowest index on ties
            best = exact.index(min(exact))
            idx[start + k] = candidates[best]
            dist[start + k] = exact[best]
    return idx, dist


def _excluded_view(cb: CaseBase, exclude_id):
    if exclude_id is None:
        return cb.features, None
    skip = cb.index_of(exclude_id)
    keep = np.delete(np.arange(len(cb)), skip)
    return cb.features[keep], keep


def retrieve_l1(query_features, cb: CaseBase, exclude_id=None) -> RetrievalResult:
    q = check_vector(query_features, cb.feature_dim, name="query")
    X, keep = _excluded_view(cb, exclude_id)
    if X.shape[0] == 0:
        raise ValueError("cannot retrieve from an empty case base")
    i, d = l1_nearest(q, X)
    i = int(i[0]) if keep is None else int(keep[i[0]])
    return RetrievalResult(i, float(d[0]), float(cb.solutions[i]))


# -- triplets -----------------------------------------------------------------


@dataclass(frozen=True)
class Triplet:
    anchor: Case
    positive: Case
    negative: Case


class TripletSampler:
    """Positive/negative pools for every anchor, from one sort of the solutions.

    Positives lie within ``same_tolerance`` of the anchor's solution (anchor
    excluded); negatives at least ``negative_gap`` away.
    """

    def __init__(self, solutions, same_tolerance=0.5, negative_gap=10.0):
        if same_tolerance < 0 or negative_gap <= 0:
            raise ValueError("same_tolerance must be >= 0 and negative_gap > 0")
        self.solutions = np.asarray(solutions, dtype=np.float64)
        self.same_tolerance = same_tolerance
        self.negative_gap = negative_gap
        self.order = np.argsort(self.solutions, kind="stable")
        self.sorted = self.solutions[self.order]
        n = len(self.sorted)
        s = self.sorted
        lo_pos = np.searchsorted(s, s - same_tolerance, "left")
        hi_pos = np.searchsorted(s, s + same_tolerance, "right")
        neg_left = np.searchsorted(s, s - negative_gap, "right")
        neg_right = np.searchsorted(s, s + negative_gap, "left")
        # searchsorted thresholds are rounded; re-anchor them on the exact difference tests
        for k in range(n):
            v = s[k]
            while lo_pos[k] > 0 and abs(s[lo_pos[k] - 1] - v) <= same_tolerance:
                lo_pos[k] -= 1
            while lo_pos[k] < k and abs(s[lo_pos[k]] - v) > same_tolerance:
                lo_pos[k] += 1
            while hi_pos[k] < n and abs(s[hi_pos[k]] - v) <= same_tolerance:
                hi_pos[k] += 1
            while hi_pos[k] > k + 1 and abs(s[hi_pos[k] - 1] - v) > same_tolerance:
                hi_pos[k] -= 1
            while neg_left[k] > 0 and not v - s[neg_left[k] - 1] >= negative_gap:
                neg_left[k] -= 1
            while neg_left[k] < n and v - s[neg_left[k]] >= negative_gap:
                neg_left[k] += 1
            while neg_right[k] < n and not s[neg_right[k]] - v >= negative_gap:
                neg_right[k] += 1
            while neg_right[k] > 0 and s[neg_right[k] - 1] - v >= negative_gap:
                neg_right[k] -= 1
        rank = np.empty(n, dtype=np.intp)
        rank[self.order] = np.arange(n)
        self._rank = rank
        self._pos = (lo_pos, hi_pos)
        self._neg = (neg_left, neg_right)

    def pool_sizes(self, anchor_index):
        k = self._rank[anchor_index]
        lo, hi = self._pos[0][k], self._pos[1][k]
        left, right = self._neg[0][k], self._neg[1][k]
        return int(hi - lo - 1), int(left + len(self.sorted) - right)

    def feasible(self) -> np.ndarray:
        n_pos = self._pos[1] - self._pos[0] - 1
        n_neg = self._neg[0] + len(self.sorted) - self._neg[1]
        ok_sorted = (n_pos > 0) & (n_neg > 0)
        return ok_sorted[self._rank]

    def sample(self, anchor_index, rng):
        """``(anchor, positive, negative)`` indices, or ``None`` if a pool is empty."""
        k = self._rank[anchor_index]
        lo, hi = self._pos[0][k], self._pos[1][k]
        left, right = self._neg[0][k], self._neg[1][k]
        n_pos = hi - lo - 1
        n_neg = left + len(self.sorted) - right
        if n_pos <= 0 or n_neg <= 0:
            return None
        r = lo + rng.integers(n_pos)
        if r >= k:
            r += 1
        u = rng.integers(n_neg)
        u = u if u < left else right + (u - left)
        return int(anchor_index), int(self.order[r]), int(self.order[u])


def sample_triplet(cb: CaseBase, anchor_index, rng, same_tolerance=0.5, negative_gap=10.0, sampler=None):
    sampler = sampler or TripletSampler(cb.solutions, same_tolerance, negative_gap)
    picked = sampler.sample(anchor_index, rng)
    if picked is None:
        return None
    a, p, n = picked
    return Triplet(cb[a], cb[p], cb[n])


# -- Siamese embedder ---------------------------------------------------------


@dataclass
class SiameseModel:
    """One embedder shared by all branches; retrieval uses L1 in embedding space."""

    embedder: MlpModel
    loss_params: TripletLossParams = TripletLossParams()
    _cache: tuple | None = field(default=None, repr=False, compare=False)

    @property
    def embedding_dim(self) -> int:
        return self.embedder.spec.output_dim

    def embed(self, X) -> np.ndarray:
        self.embedder.eval()
        return np.atleast_2d(self.embedder.forward(np.atleast_2d(X)))

    def case_embeddings(self, cb: CaseBase) -> np.ndarray:
        key = (cb, self.embedder._id, self.embedder._version)
        if self._cache is not None and self._cache[0] is cb and self._cache[1:3] == key[1:]:
            return self._cache[3]
        E = self.embed(cb.features)
        self._cache = (*key, E)
        return E


def save_siamese(path, model: SiameseModel, seed=None, selected_epoch=None):
    extra = {
        "margin": model.loss_params.margin,
        "norm_order": model.loss_params.norm_order,
        "embedding_dim": model.embedding_dim,
    }
    save_checkpoint(path, model.embedder, seed, selected_epoch, extra=extra)


def load_siamese(path) -> tuple[SiameseModel, dict]:
    embedder, meta = load_checkpoint(path)
    extra = meta["extra"]
    if "embedding_dim" not in extra:
        raise ValueError(f"{path}: not a Siamese checkpoint (no embedding_dim)")
    if int(extra["embedding_dim"]) != embedder.spec.output_dim:
        raise ShapeError(f"{path}: embedding_dim {extra['embedding_dim']} != network output {embedder.spec.output_dim}")
    params = TripletLossParams(float(extra["margin"]), int(extra["norm_order"]))
    return SiameseModel(embedder, params), meta


def default_embedder_spec(feature_dim, embedding_dim=32, widths=(256,), dropout_rate=0.2):
    return NetworkSpec(feature_dim, hidden_stack(widths, dropout_rate), embedding_dim)


def embedding_retrieval_mae(model: SiameseModel, cb_train: CaseBase, cb_val: CaseBase) -> float:
    E_train = model.embed(cb_train.features)
    E_val = model.embed(cb_val.features)
    idx, _ = l1_nearest(E_val, E_train)
    return mae(cb_train.solutions[idx], cb_val.solutions)


class _TripletEpoch:
    def __init__(self, cb, sampler, config, rng, loss_params):
        self.cb, self.sampler, self.config, self.rng = cb, sampler, config, rng
        self.loss_params = loss_params
        self.skipped = 0

    def __iter__(self):
        X = self.cb.features
        picked = []
        for anchor in self.rng.permutation(len(self.cb)):
            t = self.sampler.sample(anchor, self.rng)
            if t is None:
                self.skipped += 1
            else:
                picked.append(t)
        if not picked:
            raise ValueError("no valid triplet could be sampled from the training cases")
        picked = np.array(picked)
        bs = self.config.batch_size
        for start in range(0, len(picked), bs):
            chunk = picked[start : start + bs]
            m = len(chunk)
            inputs = np.concatenate([X[chunk[:, 0]], X[chunk[:, 1]], X[chunk[:, 2]]])
            yield inputs, self._loss(m)

    def _loss(self, m):
        def loss_fn(out):
            value, (ga, gp, gn) = triplet_margin_loss(out[:m], out[m : 2 * m], out[2 * m :], self.loss_params)
            return value, np.concatenate([ga, gp, gn])

        return loss_fn


def train_siamese(
    cb_train: CaseBase,
    cb_val: CaseBase,
    spec: NetworkSpec | None = None,
    config: TrainingConfig = TrainingConfig(),
    seed=0,
    loss_params: TripletLossParams = TripletLossParams(),
    same_tolerance=0.5,
    negative_gap=10.0,
):
    """Fit an embedder with the triplet margin loss; select by validation retrieval MAE."""
    spec = spec or default_embedder_spec(cb_train.feature_dim)
    if spec.input_dim != cb_train.feature_dim:
        raise ShapeError(f"embedder input_dim {spec.input_dim} != feature_dim {cb_train.feature_dim}")
    if len(cb_val) == 0:
        raise ValueError("validation set is empty")
    init_ss, sample_ss, dropout_ss = as_seed_sequence(seed).spawn(3)
    sampler = TripletSampler(cb_train.solutions, same_tolerance, negative_gap)
    if config.epochs > 0 and not sampler.feasible().any():
        raise ValueError(
            f"no anchor among {len(cb_train)} training cases has both a positive "
            f"(within {same_tolerance}) and a negative (at least {negative_gap} away)"
        )
    embedder = MlpModel.initialize(spec, np.random.default_rng(init_ss))
    sample_rng = np.random.default_rng(sample_ss)

    def validate(net):
        return embedding_retrieval_mae(SiameseModel(net, loss_params), cb_train, cb_val)

    best, log = fit(
        embedder,
        lambda epoch: _TripletEpoch(cb_train, sampler, config, sample_rng, loss_params),
        validate,
        config,
        np.random.default_rng(dropout_ss),
    )
    return SiameseModel(best, loss_params), log


def retrieve_siamese(query_features, model: SiameseModel, cb: CaseBase, use_cache=True) -> RetrievalResult:
    q = check_vector(query_features, cb.feature_dim, name="query")
    if len(cb) == 0:
        raise ValueError("cannot retrieve from an empty case base")
    E = model.case_embeddings(cb) if use_cache else model.embed(cb.features)
    i, d = l1_nearest(model.embed(q), E)
    i = int(i[0])
    return RetrievalResult(i, float(d[0]), float(cb.solutions[i]))


# -- estimators ---------------------------------------------------------------


def _as_casebase(X, y, prefix="t"):
    return CaseBase([f"{prefix}{i}" for i in range(len(y))], X, y)


class _RetrieverMixin(RegressorMixin):
    """``predict`` returns the retrieved solution (a retrieval-only CBR system)."""

    def _distance_space(self, X):
        raise NotImplementedError

    def retrieve(self, X):
        """Return ``(indices, distances, solutions)`` of the nearest stored case per row."""
        check_is_fitted(self, "case_base_")
        X = check_features(X, self.n_features_in_)
        idx, dist = l1_nearest(self._distance_space(X), self._stored_space())
        return idx, dist, self.case_base_.solutions[idx]

    def predict(self, X):
        return self.retrieve(X)[2]


class L1Retriever(_RetrieverMixin, BaseEstimator):
    """1-nearest-neighbour retrieval under the unweighted L1 distance."""

    def fit(self, X, y, eval_set=None):
        X, y = check_training_data(X, y)
        self.case_base_ = _as_casebase(X, y)
        self.n_features_in_ = X.shape[1]
        return self

    def _distance_space(self, X):
        return X

    def _stored_space(self):
        return self.case_base_.features


class SiameseRetriever(TransformerMixin, _RetrieverMixin, BaseEstimator):
    """Triplet-trained embedder; ``transform`` maps features to embeddings.

    Parameters
    ----------
    embedding_dim : int
        Output width of the embedder.
    hidden_widths : tuple of int
        Hidden relu layer widths.
    dropout_rate : float
        Dropout after each hidden layer during training.
    margin : float
        Triplet margin (L1 distances).
    same_tolerance : float
        Solutions within this distance of the anchor count as positives.
    negative_gap : float
        Minimum solution distance for negatives.
    epochs, learning_rate, batch_size : training schedule for Adam.
    validation_fraction : float
        Held-out share used for model selection when ``eval_set`` is not given.
    random_state : int
    """

    def __init__(
        self,
        embedding_dim=32,
        hidden_widths=(256,),
        dropout_rate=0.2,
        margin=1.0,
        same_tolerance=0.5,
        negative_gap=10.0,
        epochs=50,
        learning_rate=1e-4,
        batch_size=32,
        validation_fraction=0.1,
        random_state=0,
    ):
        self.embedding_dim = embedding_dim
        self.hidden_widths = hidden_widths
        self.dropout_rate = dropout_rate
        self.margin = margin
        self.same_tolerance = same_tolerance
        self.negative_gap = negative_gap
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def fit(self, X, y, eval_set=None):
        X, y = check_training_data(X, y)
        eval_set = check_eval_set(eval_set, X.shape[1])
        X_fit, y_fit, eval_set = _holdout(X, y, eval_set, self.validation_fraction, self.random_state)
        cb_train = _as_casebase(X_fit, y_fit)
        cb_val = _as_casebase(*eval_set, prefix="v")
        spec = default_embedder_spec(X.shape[1], self.embedding_dim, self.hidden_widths, self.dropout_rate)
        self.model_, self.training_log_ = train_siamese(
            cb_train,
            cb_val,
            spec,
            TrainingConfig(self.epochs, self.learning_rate, self.batch_size),
            seed=self.random_state,
            loss_params=TripletLossParams(self.margin),
            same_tolerance=self.same_tolerance,
            negative_gap=self.negative_gap,
        )
        self.case_base_ = _as_casebase(X, y)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        return self.model_.embed(check_features(X, self.n_features_in_))

    def _distance_space(self, X):
        return self.model_.embed(X)

    def _stored_space(self):
        return self.model_.case_embeddings(self.case_base_)


def _holdout(X, y, eval_set, fraction, random_state):
    """Use ``eval_set`` when given, else carve a seeded validation share off ``X``."""
    if eval_set is not None:
        return X, y, eval_set
    if not 0 < fraction < 1:
        raise ValueError("validation_fraction must lie in (0, 1) when no eval_set is given")
    n = len(y)
    n_val = max(1, int(round(fraction * n)))
    if n - n_val < 2:
        raise ValueError("too few cases to hold out a validation set")
    perm = np.random.default_rng(random_state).permutation(n)
    val, fit_idx = np.sort(perm[:n_val]), np.sort(perm[n_val:])
    return X[fit_idx], y[fit_idx], (X[val], y[val])
