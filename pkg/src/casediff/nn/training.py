"""Minibatch Adam loop shared by the regressor, the adapter and the embedder."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .optim import AdamState, adam_step


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 50
    learning_rate: float = 1e-4
    batch_size: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_mae: float
    skipped: int = 0


@dataclass
class TrainingLog:
    initial_val_mae: float
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0

    @property
    def best_val_mae(self) -> float:
        if self.best_epoch == 0:
            return self.initial_val_mae
        return self.epochs[self.best_epoch - 1].val_mae


Batch = tuple  # (inputs, loss_fn) with loss_fn(outputs) -> (loss, grad)


def fit(
    model,
    epoch_batches: Callable[[int], Iterable[Batch]],
    validate: Callable,
    config: TrainingConfig,
    dropout_rng: np.random.Generator,
    on_epoch_end: Callable | None = None,
):
    """Train ``model`` in place and return ``(best_snapshot, log)``.

    ``epoch_batches(epoch)`` yields the batches of one epoch. ``validate``
    maps an eval-mode model to a validation MAE; the initial model counts as
    epoch 0 and the lowest-MAE snapshot (earliest on ties) is returned.
    """
    state = AdamState.for_model(
        model,
        learning_rate=config.learning_rate,
        beta1=config.beta1,
        beta2=config.beta2,
        epsilon=config.epsilon,
    )
    model.eval()
    log = TrainingLog(initial_val_mae=float(validate(model)))
    best_mae, best = log.initial_val_mae, model.copy()
    for epoch in range(1, config.epochs + 1):
        model.train()
        total, count = 0.0, 0
        batches = epoch_batches(epoch)
        for inputs, loss_fn in batches:
            out, cache = model.forward_with_cache(inputs, dropout_rng)
            loss, upstream = loss_fn(out)
            grads, _ = model.backward(cache, upstream)
            adam_step(model, grads, state)
            total += loss
            count += 1
        model.eval()
        val = float(validate(model))
        skipped = getattr(batches, "skipped", 0)
        log.epochs.append(EpochRecord(epoch, total / max(count, 1), val, skipped))
        if val < best_mae:
            best_mae, best = val, model.copy()
            log.best_epoch = epoch
        if on_epoch_end is not None:
            on_epoch_end(log.epochs[-1])
    return best.eval(), log


def minibatches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def fold_output_affine(model, scale: float, shift: float = 0.0):
    """Rewrite the output layer so ``model(x)`` becomes ``scale * model(x) + shift``."""
    model.weights[-1] *= scale
    model.biases[-1] *= scale
    model.biases[-1] += shift
    model.mark_updated()
    return model
