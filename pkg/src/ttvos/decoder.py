"""Decoder to a full-resolution two-channel heatmap, plus the transition head."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .config import ModelConfig
from .errors import DimensionError
from .nn import Conv2d, ConvTranspose2d, Module
from .short_term import SimilarityMap
from .tensor import Tensor

SHUFFLE = 4


@dataclass
class Heatmap:
    """Channel 0 background, channel 1 foreground probability."""

    probs: Tensor
    logits: Tensor | None = None

    @classmethod
    def from_mask(cls, mask) -> "Heatmap":
        m = np.asarray(mask, dtype=np.float64)
        return cls(Tensor(np.stack([1.0 - m, m])))

    @classmethod
    def from_foreground(cls, fg) -> "Heatmap":
        fg = np.asarray(fg, dtype=np.float64)
        return cls(Tensor(np.stack([1.0 - fg, fg])))

    @property
    def foreground(self) -> np.ndarray:
        return self.probs.data[1]

    def detach(self) -> "Heatmap":
        return Heatmap(self.probs.detach())


class Decoder(Module):
    """concat(S_S, S_L) -> conv -> ConvTranspose(x2) -> + proj(f4) -> conv -> conv -> PixelShuffle(x4)."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.alpha = cfg.alpha
        c = cfg.c_dec
        self.fuse = Conv2d(2 * cfg.c_sim, c, 3, rng)
        self.up = ConvTranspose2d(c, c, 2, rng, stride=2)
        self.skip = Conv2d(cfg.c4, c, 1, rng)
        self.refine = Conv2d(c, c, 3, rng)
        self.head = Conv2d(c, 2 * SHUFFLE * SHUFFLE, 3, rng)

    def __call__(self, s_short: SimilarityMap, s_long: SimilarityMap, f4: Tensor) -> Heatmap:
        if s_short.values.shape[1:] != s_long.values.shape[1:]:
            raise DimensionError(f"similarity maps differ in extent: {s_short.values.shape} vs {s_long.values.shape}")
        if tuple(2 * n for n in s_long.values.shape[1:]) != f4.shape[1:]:
            raise DimensionError(f"similarity maps {s_long.values.shape[1:]} are not at half the f4 grid {f4.shape[1:]}")
        a = self.alpha
        x = T.leaky_relu(self.fuse(T.concat([s_short.values, s_long.values], axis=0)), a)
        x = T.add(self.up(x), self.skip(f4))
        x = T.leaky_relu(self.refine(x), a)
        logits = T.pixel_shuffle(self.head(x), SHUFFLE)
        return Heatmap(T.softmax(logits, axis=0), logits)


class TransitionHead(Module):
    """Single 3x3 conv from the long-term similarity map to the predicted transition matrix."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.conv = Conv2d(cfg.c_sim, 2, 3, rng)

    def __call__(self, s_long: SimilarityMap) -> Tensor:
        return self.conv(s_long.values)


def transition_target(h_gt: Heatmap | np.ndarray, h_est_prev: Heatmap | np.ndarray, factor: int = 8) -> np.ndarray:
    """pool(H_t) - pool(H_hat_{t-1}) at 1/``factor`` resolution; carries no gradient."""
    a = h_gt.probs.data if isinstance(h_gt, Heatmap) else np.asarray(h_gt, dtype=np.float64)
    b = h_est_prev.probs.data if isinstance(h_est_prev, Heatmap) else np.asarray(h_est_prev, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"heatmap shapes differ: {a.shape} vs {b.shape}")
    c, h, w = a.shape
    if c != 2:
        raise DimensionError(f"heatmaps need 2 channels, got {c}")
    if h % factor or w % factor:
        raise DimensionError(f"heatmap extents {(h, w)} not divisible by {factor}")

    def pool(x):
        return x.reshape(h // factor, factor, w // factor, factor).mean(axis=(1, 3))

    # both channels of a heatmap sum to 1, so the background row is exactly the
    # negated foreground row; building it that way keeps the antisymmetry exact
    d = pool(a[1]) - pool(b[1])
    return np.stack([-d, d])
