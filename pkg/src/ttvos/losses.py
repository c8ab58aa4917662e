"""Segmentation cross-entropy, transition-matrix consistency loss, and their sum."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .config import LossConfig
from .errors import DimensionError, InputError
from .tensor import Tensor


def ce_loss(logits: Tensor, gt_mask) -> Tensor:
    """Mean over pixels of -log softmax(logits)[gt class]."""
    m = np.asarray(gt_mask)
    if logits.ndim != 3 or logits.shape[0] != 2:
        raise DimensionError(f"logits must be (2, H, W), got {logits.shape}")
    if m.shape != logits.shape[1:]:
        raise DimensionError(f"mask {m.shape} does not match logits {logits.shape[1:]}")
    if not np.isin(m, (0, 1)).all():
        raise InputError("ce_loss mask must be binary")
    m = m.astype(np.float64)
    onehot = np.stack([1.0 - m, m])
    picked = T.tsum(T.mul(T.log_softmax(logits, axis=0), onehot))
    return T.mul(picked, -1.0 / m.size)


def tc_loss(pi_hat: Tensor, pi) -> Tensor:
    """Mean squared difference between predicted and target transition matrices."""
    pi = np.asarray(pi.data if isinstance(pi, Tensor) else pi, dtype=np.float64)
    if pi_hat.shape != pi.shape:
        raise DimensionError(f"transition shapes differ: {pi_hat.shape} vs {pi.shape}")
    d = T.sub(pi_hat, pi)
    return T.mean(T.mul(d, d))


def total_loss(ce: Tensor, tc: Tensor, cfg: LossConfig = LossConfig()) -> Tensor:
    return T.add(ce, T.mul(tc, cfg.lambda_tc))
