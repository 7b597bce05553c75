"""Input checks shared by the estimators."""

import math

import numpy as np
from sklearn.utils.validation import check_array, check_X_y

from .exceptions import ShapeError


def check_features(X, n_features=None, name="X"):
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if n_features is not None and X.shape[1] != n_features:
        raise ShapeError(f"{name} has {X.shape[1]} features, expected {n_features}")
    return X


def check_training_data(X, y):
    X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
    return X, y.astype(np.float64)


def check_eval_set(eval_set, n_features):
    if eval_set is None:
        return None
    X_val, y_val = eval_set
    X_val, y_val = check_training_data(X_val, y_val)
    if X_val.shape[1] != n_features:
        raise ShapeError(f"eval_set has {X_val.shape[1]} features, expected {n_features}")
    return X_val, y_val


def check_vector(x, length=None, name="vector"):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {x.shape}")
    if length is not None and x.shape[0] != length:
        raise ShapeError(f"{name} has length {x.shape[0]}, expected {length}")
    return x


def check_finite(*values):
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"non-finite value {v!r}")


def as_seed_sequence(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)
