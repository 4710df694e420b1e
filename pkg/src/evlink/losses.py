"""Discriminator, identity, contrastive and combined objectives.

The probability-space functions take discriminator / classifier outputs as
produced by the network heads. Training uses the ``*_from_logits`` forms,
which compute the same quantities through log-sigmoid and log-softmax and
stay finite when a head saturates.
"""
from __future__ import annotations

import numpy as np

from . import autograd as ag
from .autograd import Tensor


class DomainError(ValueError):
    pass


def loss_discriminator(d_e, d_r) -> Tensor:
    """-(1/n) sum_i [log d_e[i] + log(1 - d_r[i])]."""
    d_e, d_r = ag.as_tensor(d_e), ag.as_tensor(d_r)
    if d_e.shape != d_r.shape or d_e.data.size == 0:
        raise ValueError("discriminator batches must be non-empty and equal in size")
    if np.any((d_e.data <= 0) | (d_e.data >= 1)) or np.any((d_r.data <= 0) | (d_r.data >= 1)):
        raise DomainError("discriminator outputs must lie strictly inside (0, 1)")
    n = d_e.data.size
    return -(ag.log(d_e).sum() + ag.log(1.0 - d_r).sum()) * (1.0 / n)


def loss_discriminator_from_logits(z_e, z_r) -> Tensor:
    """Same as :func:`loss_discriminator` with d = sigmoid(z)."""
    z_e, z_r = ag.as_tensor(z_e), ag.as_tensor(z_r)
    n = z_e.data.size
    # -log sigmoid(z) = softplus(-z); -log(1 - sigmoid(z)) = softplus(z)
    return (ag.softplus(-z_e).sum() + ag.softplus(z_r).sum()) * (1.0 / n)


def _labels(labels, labels_r):
    labels = np.asarray(labels, dtype=np.int64)
    labels_r = labels if labels_r is None else np.asarray(labels_r, dtype=np.int64)
    if labels.shape != labels_r.shape or labels.ndim != 1 or len(labels) == 0:
        raise ValueError("labels must be non-empty 1-D arrays of equal length")
    return labels, labels_r


def loss_identity(p_e, p_r, labels, labels_r=None) -> Tensor:
    """-(1/n) sum_i [log p_e[i, y_i] + log p_r[i, y'_i]] with one-hot targets.

    ``labels_r`` defaults to ``labels`` (both images of a pair show one instance).
    """
    p_e, p_r = ag.as_tensor(p_e), ag.as_tensor(p_r)
    labels, labels_r = _labels(labels, labels_r)
    rows = np.arange(len(labels))
    pe, pr = p_e[rows, labels], p_r[rows, labels_r]
    if np.any(pe.data <= 0) or np.any(pr.data <= 0):
        raise DomainError("zero probability at a target index")
    return -(ag.log(pe).sum() + ag.log(pr).sum()) * (1.0 / len(labels))


def loss_identity_from_logits(z_e, z_r, labels, labels_r=None) -> Tensor:
    labels, labels_r = _labels(labels, labels_r)
    rows = np.arange(len(labels))
    le = ag.log_softmax(ag.as_tensor(z_e))[rows, labels]
    lr = ag.log_softmax(ag.as_tensor(z_r))[rows, labels_r]
    return -(le.sum() + lr.sum()) * (1.0 / len(labels))


def loss_contrastive(f_e, f_r, s, margin: float = 1.0) -> Tensor:
    """(1/2n) sum_i [s_i l_i^2 + (1 - s_i) max(m - l_i, 0)^2], l_i = ||f_e[i] - f_r[i]||."""
    if margin <= 0:
        raise ValueError("margin must be > 0")
    f_e, f_r = ag.as_tensor(f_e), ag.as_tensor(f_r)
    if f_e.shape != f_r.shape:
        raise ValueError(f"embedding batches differ in shape: {f_e.shape} vs {f_r.shape}")
    s = np.asarray(s, dtype=f_e.dtype)
    n = len(s)
    diff = f_e - f_r
    sq = (ag.square(diff)).sum(axis=1)  # l^2 without the sqrt kink
    dist = ag.pair_distance(f_e, f_r)
    push = ag.square(ag.hinge(margin - dist))
    return (sq * s + push * (1.0 - s)).sum() * (1.0 / (2 * n))


def loss_total(l_id, l_ct, l_dis, alpha: float, beta: float, gamma: float):
    """alpha * L_id + beta * L_ct - gamma * L_dis."""
    if min(alpha, beta, gamma) < 0:
        raise ValueError("loss weights must be >= 0")
    return l_id * alpha + l_ct * beta - l_dis * gamma
