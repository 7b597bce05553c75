"""Dense feedforward networks with relu hidden layers and inverted dropout."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

import numpy as np

from ..exceptions import ShapeError

ACTIVATIONS = ("relu",)

_model_ids = itertools.count()


@dataclass(frozen=True)
class HiddenLayer:
    width: int
    activation: str = "relu"
    dropout_rate: float = 0.2

    def __post_init__(self):
        if int(self.width) != self.width or self.width < 1:
            raise ValueError(f"hidden width must be a positive integer, got {self.width}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unsupported activation {self.activation!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture of a feedforward network with a linear output layer."""

    input_dim: int
    hidden_layers: tuple[HiddenLayer, ...] = ()
    output_dim: int = 1

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(self.hidden_layers))
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("input_dim and output_dim must be >= 1")

    @property
    def layer_sizes(self) -> list[int]:
        return [self.input_dim, *(h.width for h in self.hidden_layers), self.output_dim]

    def with_input_dim(self, input_dim: int) -> NetworkSpec:
        return replace(self, input_dim=input_dim)

    def inner(self) -> tuple:
        """Everything except the input width; equal inner specs mean equal architectures."""
        return (self.hidden_layers, self.output_dim)

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
            "hidden_layers": [
                {"width": h.width, "activation": h.activation, "dropout_rate": h.dropout_rate}
                for h in self.hidden_layers
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> NetworkSpec:
        return cls(
            input_dim=int(d["input_dim"]),
            output_dim=int(d["output_dim"]),
            hidden_layers=tuple(HiddenLayer(**h) for h in d["hidden_layers"]),
        )


def hidden_stack(widths, dropout_rate=0.2, activation="relu") -> tuple[HiddenLayer, ...]:
    return tuple(HiddenLayer(int(w), activation, dropout_rate) for w in widths)


DEFAULT_INNER_WIDTHS = (256, 64)


def _rowwise_matmul(a, b):
    return np.einsum("ij,jk->ik", a, b)


@dataclass
class ForwardCache:
    model_id: int
    version: int
    inputs: np.ndarray
    pre_activations: list = field(default_factory=list)
    activations: list = field(default_factory=list)
    masks: list = field(default_factory=list)
    squeeze: bool = False


class MlpModel:
    """Parameters and mode for a :class:`NetworkSpec`.

    Weights are stored as ``(fan_in, fan_out)`` matrices so a batch ``X`` of
    shape ``(n, fan_in)`` maps to ``X @ W + b``.
    """

    def __init__(self, spec: NetworkSpec, weights, biases, mode: str = "eval"):
        sizes = spec.layer_sizes
        if len(weights) != len(sizes) - 1 or len(biases) != len(sizes) - 1:
            raise ShapeError("number of parameter arrays does not match spec")
        self.spec = spec
        self.weights = []
        self.biases = []
        for i, (w, b) in enumerate(zip(weights, biases)):
            w = np.array(w, dtype=np.float64)
            b = np.array(b, dtype=np.float64)
            if w.shape != (sizes[i], sizes[i + 1]) or b.shape != (sizes[i + 1],):
                raise ShapeError(
                    f"layer {i}: expected W{(sizes[i], sizes[i + 1])} b{(sizes[i + 1],)}, "
                    f"got W{w.shape} b{b.shape}"
                )
            self.weights.append(w)
            self.biases.append(b)
        self.mode = "eval"
        self.set_mode(mode)
        self._id = next(_model_ids)
        self._version = 0

    @classmethod
    def initialize(cls, spec: NetworkSpec, rng: np.random.Generator) -> MlpModel:
        """He-uniform init for relu layers, LeCun-uniform for the linear output, zero biases."""
        sizes = spec.layer_sizes
        n_layers = len(sizes) - 1
        weights, biases = [], []
        for i in range(n_layers):
            fan_in, fan_out = sizes[i], sizes[i + 1]
            gain = 6.0 if i < n_layers - 1 else 3.0
            limit = np.sqrt(gain / fan_in)
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(spec, weights, biases)

    @classmethod
    def zeros(cls, spec: NetworkSpec) -> MlpModel:
        sizes = spec.layer_sizes
        return cls(
            spec,
            [np.zeros((sizes[i], sizes[i + 1])) for i in range(len(sizes) - 1)],
            [np.zeros(sizes[i + 1]) for i in range(len(sizes) - 1)],
        )

    # -- parameters -------------------------------------------------------

    def parameters(self) -> list[np.ndarray]:
        """Flat list ``[W0, b0, W1, b1, ...]``; arrays are live views."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def mark_updated(self):
        self._version += 1

    def copy(self) -> MlpModel:
        return MlpModel(self.spec, self.weights, self.biases, mode=self.mode)

    def set_mode(self, mode: str) -> MlpModel:
        if mode not in ("train", "eval"):
            raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
        self.mode = mode
        return self

    def train(self) -> MlpModel:
        return self.set_mode("train")

    def eval(self) -> MlpModel:
        return self.set_mode("eval")

    # -- passes -----------------------------------------------------------

    def _as_batch(self, x):
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.spec.input_dim:
            raise ShapeError(
                f"expected input with {self.spec.input_dim} features, got shape {np.shape(x)}"
            )
        return x, squeeze

    def forward_with_cache(self, x, rng: np.random.Generator | None = None, masks=None, row_stable=False):
        """Forward pass that records what :meth:`backward` needs.

        In train mode dropout masks are sampled from ``rng`` unless ``masks``
        is given, in which case those masks are replayed. ``row_stable``
        swaps BLAS for a non-blocked product so each row's output is bitwise
        independent of the batch it arrives in.
        """
        mm = _rowwise_matmul if row_stable else np.matmul
        x, squeeze = self._as_batch(x)
        cache = ForwardCache(self._id, self._version, x, squeeze=squeeze)
        h = x
        n_hidden = len(self.spec.hidden_layers)
        training = self.mode == "train"
        if training and masks is None and rng is None and any(
            layer.dropout_rate > 0 for layer in self.spec.hidden_layers
        ):
            raise ValueError("train-mode forward with dropout needs an rng or explicit masks")
        for i, layer in enumerate(self.spec.hidden_layers):
            z = mm(h, self.weights[i]) + self.biases[i]
            a = np.maximum(z, 0.0)
            mask = None
            if training and layer.dropout_rate > 0:
                if masks is not None:
                    mask = masks[i]
                    if mask is not None and mask.shape != a.shape:
                        raise ShapeError("replayed dropout mask has the wrong shape")
                else:
                    keep = rng.random(a.shape) >= layer.dropout_rate
                    mask = keep / (1.0 - layer.dropout_rate)
                if mask is not None:
                    a = a * mask
            cache.pre_activations.append(z)
            cache.activations.append(h)
            cache.masks.append(mask)
            h = a
        cache.activations.append(h)
        out = mm(h, self.weights[n_hidden]) + self.biases[n_hidden]
        return (out[0] if squeeze else out), cache

    def forward(self, x, rng: np.random.Generator | None = None):
        return self.forward_with_cache(x, rng, row_stable=True)[0]

    __call__ = forward

    def backward(self, cache: ForwardCache, upstream):
        """Gradients of ``sum(upstream * output)`` w.r.t. parameters and input.

        Returns ``(grads, input_grad)`` with ``grads`` ordered like
        :meth:`parameters`.
        """
        if not isinstance(cache, ForwardCache) or cache.model_id != self._id:
            raise ValueError("backward needs the cache from a forward pass of this model")
        if cache.version != self._version:
            raise ValueError("parameters changed since the forward pass; cache is stale")
        g = np.asarray(upstream, dtype=np.float64)
        if cache.squeeze:
            g = g[None, :]
        n = cache.inputs.shape[0]
        if g.shape != (n, self.spec.output_dim):
            raise ShapeError(f"upstream gradient shape {g.shape} != {(n, self.spec.output_dim)}")
        n_hidden = len(self.spec.hidden_layers)
        grads = [None] * (2 * (n_hidden + 1))
        h_last = cache.activations[n_hidden]
        grads[2 * n_hidden] = h_last.T @ g
        grads[2 * n_hidden + 1] = g.sum(axis=0)
        g = g @ self.weights[n_hidden].T
        for i in range(n_hidden - 1, -1, -1):
            if cache.masks[i] is not None:
                g = g * cache.masks[i]
            g = g * (cache.pre_activations[i] > 0)
            h_in = cache.activations[i]
            grads[2 * i] = h_in.T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.weights[i].T
        return grads, (g[0] if cache.squeeze else g)

    def __repr__(self):
        return f"MlpModel(sizes={self.spec.layer_sizes}, mode={self.mode!r})"
