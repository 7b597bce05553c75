"""Retrieve-then-adapt regressor composed from a retriever and a difference adapter."""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, clone
from sklearn.utils.validation import check_is_fitted

from ._validation import check_eval_set, check_features, check_training_data
from .adaptation import CaseDifferenceAdapter
from .retrieval import L1Retriever


@dataclass
class StagedPrediction:
    """Both stages for each query; ``adapted`` is built from the same retrieved case."""

    retrieved_index: np.ndarray
    retrieved_solution: np.ndarray
    delta: np.ndarray

    @property
    def adapted(self) -> np.ndarray:
        return self.retrieved_solution + self.delta


class CBRRegressor(RegressorMixin, BaseEstimator):
    """Case-based regressor: nearest stored case plus a learned solution difference.

    Parameters
    ----------
    retriever : estimator with ``fit`` and ``retrieve``, default L1Retriever()
    adapter : estimator with ``fit`` and ``predict_delta``, default CaseDifferenceAdapter()
    adapter_validation : {"l1", "retriever"}
        Validation partners for adapter model selection: L1-nearest training
        case, or the case the fitted retriever returns.
    """

    def __init__(self, retriever=None, adapter=None, adapter_validation="l1"):
        self.retriever = retriever
        self.adapter = adapter
        self.adapter_validation = adapter_validation

    def fit(self, X, y, eval_set=None):
        X, y = check_training_data(X, y)
        eval_set = check_eval_set(eval_set, X.shape[1])
        if self.adapter_validation not in ("l1", "retriever"):
            raise ValueError("adapter_validation must be 'l1' or 'retriever'")
        self.retriever_ = clone(self.retriever) if self.retriever is not None else L1Retriever()
        self.adapter_ = clone(self.adapter) if self.adapter is not None else CaseDifferenceAdapter()
        self.retriever_.fit(X, y, eval_set=eval_set)
        partners = None
        if self.adapter_validation == "retriever" and eval_set is not None:
            partners = self.retriever_.retrieve(eval_set[0])[0]
        self.adapter_.fit(X, y, eval_set=eval_set, val_partners=partners)
        self.case_features_ = X
        self.n_features_in_ = X.shape[1]
        return self

    def predict_stages(self, X) -> StagedPrediction:
        check_is_fitted(self, "retriever_")
        X = check_features(X, self.n_features_in_)
        idx, _, solutions = self.retriever_.retrieve(X)
        delta = self.adapter_.predict_delta(X, self.case_features_[idx])
        return StagedPrediction(idx, solutions, np.asarray(delta, dtype=np.float64))

    def predict(self, X):
        return self.predict_stages(X).adapted
