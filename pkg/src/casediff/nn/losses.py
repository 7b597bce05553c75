from dataclasses import dataclass

import numpy as np

from ..exceptions import ShapeError


@dataclass(frozen=True)
class TripletLossParams:
    margin: float = 1.0
    norm_order: int = 1

    def __post_init__(self):
        if not self.margin > 0:
            raise ValueError("margin must be positive")
        if self.norm_order != 1:
            raise ValueError("only the L1 norm (norm_order=1) is supported")


def mse_loss(predicted, target):
    """Mean squared error over all elements and its gradient w.r.t. ``predicted``."""
    p = np.asarray(predicted, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ShapeError(f"shape mismatch: {p.shape} vs {t.shape}")
    if p.size == 0:
        raise ValueError("mse_loss of empty arrays")
    diff = p - t
    return float(np.mean(diff**2)), 2.0 * diff / diff.size


def mae(predicted, target) -> float:
    p = np.asarray(predicted, dtype=np.float64).ravel()
    t = np.asarray(target, dtype=np.float64).ravel()
    if p.shape != t.shape:
        raise ShapeError(f"length mismatch: {p.size} vs {t.size}")
    if p.size == 0:
        raise ValueError("mae of empty sequences is undefined")
    return float(np.mean(np.abs(p - t)))


def triplet_margin_loss(anchor, positive, negative, params=TripletLossParams()):
    """``max(d(a, p) - d(a, n) + margin, 0)`` with L1 distance ``d``.

    Accepts single embeddings or batches of shape ``(n, k)``; batch losses are
    averaged. Returns ``(loss, (grad_anchor, grad_positive, grad_negative))``.
    The subgradient of ``|.|`` at 0 is taken as 0.
    """
    a = np.asarray(anchor, dtype=np.float64)
    p = np.asarray(positive, dtype=np.float64)
    n = np.asarray(negative, dtype=np.float64)
    if not (a.shape == p.shape == n.shape):
        raise ShapeError(f"embedding shapes differ: {a.shape}, {p.shape}, {n.shape}")
    single = a.ndim == 1
    if single:
        a, p, n = a[None], p[None], n[None]
    d_ap = np.abs(a - p).sum(axis=1)
    d_an = np.abs(a - n).sum(axis=1)
    hinge = d_ap - d_an + params.margin
    active = (hinge > 0).astype(np.float64)[:, None] / a.shape[0]
    s_ap = np.sign(a - p)
    s_an = np.sign(a - n)
    ga = active * (s_ap - s_an)
    gp = -active * s_ap
    gn = active * s_an
    loss = float(np.mean(np.maximum(hinge, 0.0)))
    if single:
        ga, gp, gn = ga[0], gp[0], gn[0]
    return loss, (ga, gp, gn)
