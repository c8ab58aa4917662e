"""Tiny strided trunk producing the 1/4, 1/8, 1/16 feature pyramid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .config import ModelConfig
from .errors import ConfigurationError, DimensionError
from .nn import Conv2d, Module
from .tensor import Tensor


@dataclass
class FeaturePyramid:
    f4: Tensor
    f8: Tensor
    f16: Tensor
    frame: int = 0

    def detach(self) -> "FeaturePyramid":
        return FeaturePyramid(self.f4.detach(), self.f8.detach(), self.f16.detach(), self.frame)


class Backbone(Module):
    """stem(/2) -> down(/4) -> refine = f4 -> down(/8) -> refine = f8 -> down(/16) -> refine = f16.

    Downsampling convs use k=4, stride 2, padding 1 so that even extents halve
    exactly; refinement convs are 3x3.
    """

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.alpha = cfg.alpha
        self.stem = Conv2d(3, cfg.c4, 4, rng, stride=2, padding=1)
        self.down4 = Conv2d(cfg.c4, cfg.c4, 4, rng, stride=2, padding=1)
        self.refine4 = Conv2d(cfg.c4, cfg.c4, 3, rng)
        self.down8 = Conv2d(cfg.c4, cfg.c8, 4, rng, stride=2, padding=1)
        self.refine8 = Conv2d(cfg.c8, cfg.c8, 3, rng)
        self.down16 = Conv2d(cfg.c8, cfg.c16, 4, rng, stride=2, padding=1)
        self.refine16 = Conv2d(cfg.c16, cfg.c16, 3, rng)

    def layers(self):
        return [self.stem, self.down4, self.refine4, self.down8, self.refine8, self.down16, self.refine16]

    def __call__(self, image: Tensor, frame: int = 0) -> FeaturePyramid:
        return self.extract(image, frame)

    def extract(self, image: Tensor, frame: int = 0) -> FeaturePyramid:
        image = T.as_tensor(image)
        if image.ndim != 3 or image.shape[0] != 3:
            raise DimensionError(f"image must be (3, H, W), got {image.shape}")
        h, w = image.shape[1:]
        if h % 16 or w % 16:
            raise ConfigurationError(f"image extents {(h, w)} must be divisible by 16")
        a = self.alpha
        x = T.leaky_relu(self.stem(image), a)
        x = T.leaky_relu(self.down4(x), a)
        f4 = T.leaky_relu(self.refine4(x), a)
        x = T.leaky_relu(self.down8(f4), a)
        f8 = T.leaky_relu(self.refine8(x), a)
        x = T.leaky_relu(self.down16(f8), a)
        f16 = T.leaky_relu(self.refine16(x), a)
        return FeaturePyramid(f4, f8, f16, frame)
