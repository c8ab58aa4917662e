"""Short-term matching: previous-frame template vs current f16."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .config import ModelConfig
from .errors import DimensionError
from .nn import Conv2d, Module
from .tensor import Tensor


@dataclass
class ShortTemplate:
    embed: Tensor
    frame: int = 0


@dataclass
class SimilarityMap:
    values: Tensor
    kind: str  # "short" or "long"


def pool_heat(heat: Tensor, feat: Tensor) -> Tensor:
    """Average-pool a full-resolution heatmap down to ``feat``'s grid."""
    heat = T.as_tensor(heat)
    if heat.ndim != 3 or heat.shape[0] != 2:
        raise DimensionError(f"heatmap must be (2, H, W), got {heat.shape}")
    fh, fw = feat.shape[1:]
    h, w = heat.shape[1:]
    if h % fh or w % fw or h // fh != w // fw:
        raise DimensionError(f"heatmap {(h, w)} is not an integer multiple of feature grid {(fh, fw)}")
    k = h // fh
    return heat if k == 1 else T.avg_pool2d(heat, k)


class ShortTerm(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.alpha = cfg.alpha
        self.embed1 = Conv2d(cfg.c16 + 2, cfg.c_st, 3, rng)
        self.embed2 = Conv2d(cfg.c_st, cfg.c_st, 3, rng)
        self.proj = Conv2d(cfg.c16, cfg.c_st, 3, rng)
        self.fuse = Conv2d(cfg.c_st, cfg.c_sim, 1, rng)

    def build_template(self, f16_prev: Tensor, heat_prev, frame: int = 0) -> ShortTemplate:
        x = T.concat([f16_prev, pool_heat(heat_prev, f16_prev)], axis=0)
        x = T.leaky_relu(self.embed1(x), self.alpha)
        x = T.leaky_relu(self.embed2(x), self.alpha)
        return ShortTemplate(x, frame)

    def correlate(self, template: ShortTemplate, f16: Tensor) -> Tensor:
        """Depth-wise correlation: per-channel product of template and projected f16."""
        if template.embed.shape[1:] != f16.shape[1:]:
            raise DimensionError(f"template grid {template.embed.shape[1:]} != f16 grid {f16.shape[1:]}")
        return T.mul(template.embed, self.proj(f16))

    def match(self, template: ShortTemplate, f16: Tensor) -> SimilarityMap:
        s = self.fuse(self.correlate(template, f16))
        h, w = s.shape[1:]
        return SimilarityMap(T.bilinear_resize(s, 2 * h, 2 * w), "short")


class ShortFallback(Module):
    """Replacement when short-term matching is ablated: convs over concat(f16_t, heat)."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.alpha = cfg.alpha
        self.conv1 = Conv2d(cfg.c16 + 2, cfg.c_st, 3, rng)
        self.conv2 = Conv2d(cfg.c_st, cfg.c_sim, 3, rng)

    def __call__(self, f16: Tensor, heat_prev) -> SimilarityMap:
        x = T.concat([f16, pool_heat(heat_prev, f16)], axis=0)
        x = T.leaky_relu(self.conv1(x), self.alpha)
        s = T.leaky_relu(self.conv2(x), self.alpha)
        h, w = s.shape[1:]
        return SimilarityMap(T.bilinear_resize(s, 2 * h, 2 * w), "short")
