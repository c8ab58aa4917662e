"""Soft aggregation of independent per-object foreground probabilities."""

from __future__ import annotations

import numpy as np

from .errors import InputError, UsageError

EPS = 1e-7


def soft_aggregate(fg_probs) -> np.ndarray:
    """Return an (N+1, H, W) distribution, index 0 = background.

    Background is the product of complements; every channel is turned into
    odds p/(1-p+eps) and the odds are normalised to sum to one.
    """
    if len(fg_probs) == 0:
        raise UsageError("soft_aggregate needs at least one object")
    p = np.stack([np.asarray(x, dtype=np.float64) for x in fg_probs])
    if p.min() < 0 or p.max() > 1:
        raise InputError("foreground probabilities must lie in [0, 1]")
    bg = np.prod(1.0 - p, axis=0, keepdims=True)
    full = np.concatenate([bg, p], axis=0)
    odds = full / (1.0 - full + EPS)
    return odds / odds.sum(axis=0, keepdims=True)


def argmax_labels(dist: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, so ties go to the lower index
    return np.argmax(dist, axis=0).astype(np.int64)
