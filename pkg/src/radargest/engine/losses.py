"""Training losses: reconstruction MSE, cross-entropy, triplet with mining."""

from __future__ import annotations

import numpy as np

from .tensor import (
    Tensor,
    ShapeError,
    leaky_relu,
    make_op,
    reduce_mean,
    reduce_sum,
    sqrt,
    square,
    sub,
    take,
)

__all__ = [
    "mse_loss",
    "cross_entropy_loss",
    "triplet_loss",
    "mine_batch_hard",
    "MiningError",
]

# keeps sqrt differentiable when a distance is exactly zero; shifts the
# reported norm by at most 1e-12
_NORM_EPS_SQ = 1e-24


class MiningError(ValueError):
    """Raised when a batch cannot form valid triplets."""


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean squared error over all entries (matching shapes required)."""
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss shapes differ: {pred.shape} vs {target.shape}")
    return reduce_mean(square(sub(pred, target)))


def cross_entropy_loss(logits: Tensor, labels) -> Tensor:
    """Mean of -log softmax(logits)[label] over the batch.

    ``logits`` is (batch, n_classes); ``labels`` an int array in [0, n_classes).
    Fused forward/backward using the stable log-sum-exp form.
    """
    labels = np.asarray(labels, dtype=np.intp)
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy_loss expects (batch, classes) logits, got {logits.shape}")
    n, c = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} does not match batch {n}")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= c:
        raise ValueError(f"labels out of range [0, {c}): {labels[(labels < 0) | (labels >= c)]}")

    z = logits.data
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    picked = z[np.arange(n), labels]
    out = np.mean(lse - picked)

    def back(g):
        p = np.exp(z - zmax)
        p /= p.sum(axis=1, keepdims=True)
        p[np.arange(n), labels] -= 1.0
        return (p * (g / n),)

    return make_op(np.float64(out), (logits,), back)


def _pair_distance(a: Tensor, b: Tensor) -> Tensor:
    d2 = reduce_sum(square(sub(a, b)), axis=1)
    return sqrt(d2 + _NORM_EPS_SQ)


def triplet_loss(anchor: Tensor, positive: Tensor, negative: Tensor, margin: float = 0.2) -> Tensor:
    """Mean of max(0, ||a-p|| - ||a-n|| + margin) over the batch."""
    if not (anchor.shape == positive.shape == negative.shape):
        raise ShapeError(
            f"triplet_loss embedding shapes differ: {anchor.shape}, {positive.shape}, {negative.shape}"
        )
    d_ap = _pair_distance(anchor, positive)
    d_an = _pair_distance(anchor, negative)
    hinge = leaky_relu(sub(d_ap, d_an) + float(margin), alpha=0.0)
    return reduce_mean(hinge)


def mine_batch_hard(embeddings: np.ndarray, labels) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batch-hard triplet mining on raw embedding values.

    For each anchor, picks the farthest same-label sample (hardest positive)
    and the closest different-label sample (hardest negative). Returns
    (anchor_idx, positive_idx, negative_idx). Index selection is not part of
    the differentiable graph; gather the rows afterwards.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    n = emb.shape[0]
    sq = (emb * emb).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * emb @ emb.T
    np.maximum(d2, 0.0, out=d2)

    same = labels[:, None] == labels[None, :]
    pos_mask = same.copy()
    np.fill_diagonal(pos_mask, False)
    neg_mask = ~same
    if not pos_mask.any(axis=1).all():
        bad = np.where(~pos_mask.any(axis=1))[0]
        raise MiningError(f"no same-class positive available for anchors {bad.tolist()}")
    if not neg_mask.any(axis=1).all():
        bad = np.where(~neg_mask.any(axis=1))[0]
        raise MiningError(f"no different-class negative available for anchors {bad.tolist()}")

    pos_idx = np.where(pos_mask, d2, -np.inf).argmax(axis=1)
    neg_idx = np.where(neg_mask, d2, np.inf).argmin(axis=1)
    return np.arange(n), pos_idx, neg_idx


def batch_hard_triplet_loss(embeddings: Tensor, labels, margin: float = 0.2) -> Tensor:
    """Triplet loss with batch-hard mining, differentiable through the
    selected embedding rows."""
    a, p, n = mine_batch_hard(embeddings.data, labels)
    return triplet_loss(
        take(embeddings, a, axis=0),
        take(embeddings, p, axis=0),
        take(embeddings, n, axis=0),
        margin=margin,
    )
