"""Central finite-difference verification of analytic gradients."""

from dataclasses import dataclass

import numpy as np


def relative_error(analytic, numeric, floor=1e-8):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def numerical_gradient(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. the array ``x``, perturbed in place."""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + h
        f_plus = f()
        x[idx] = orig - h
        f_minus = f()
        x[idx] = orig
        grad[idx] = (f_plus - f_minus) / (2.0 * h)
    return grad


@dataclass
class GradCheckReport:
    per_parameter: list
    tolerance: float

    @property
    def max_relative_error(self) -> float:
        return max(self.per_parameter, default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_relative_error < self.tolerance

    @property
    def failing(self) -> list:
        return [i for i, e in enumerate(self.per_parameter) if not e < self.tolerance]


def finite_diff_check(model, inputs, loss, tolerance=1e-4, h=1e-5, gradients=None, masks=None):
    """Compare ``model.backward`` against central differences for every parameter.

    ``loss`` maps the network output to ``(value, d value / d output)``. Pass
    ``gradients`` to check an externally supplied gradient list instead of
    the model's own. In train mode, ``masks`` must fix the dropout pattern.
    """
    if model.mode == "train" and masks is None and any(
        layer.dropout_rate > 0 for layer in model.spec.hidden_layers
    ):
        raise ValueError("finite_diff_check needs a deterministic model: eval mode or fixed masks")
    out, cache = model.forward_with_cache(inputs, masks=masks)
    if gradients is None:
        _, upstream = loss(out)
        gradients, _ = model.backward(cache, upstream)

    def objective():
        return loss(model.forward_with_cache(inputs, masks=masks)[0])[0]

    per_param = []
    for p, g in zip(model.parameters(), gradients):
        numeric = numerical_gradient(objective, p, h)
        per_param.append(float(relative_error(g, numeric).max(initial=0.0)))
    return GradCheckReport(per_param, tolerance)


def check_gradient(f, arrays, analytic, tolerance=1e-4, h=1e-5):
    """Finite-difference check of ``f(*arrays)`` against ``analytic`` gradients per array."""
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    per_arr = []
    for a, g in zip(arrays, analytic):
        numeric = numerical_gradient(lambda: f(*arrays), a, h)
        per_arr.append(float(relative_error(g, numeric).max(initial=0.0)))
    return GradCheckReport(per_arr, tolerance)
