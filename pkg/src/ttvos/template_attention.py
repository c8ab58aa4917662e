"""Adaptive template attention.

The long-term template is a ``c_tp x c_tp`` row-stochastic matrix. Each frame
contributes one embedding matrix

    I = row_softmax(f(X') @ g(X')^T)

built from the masked feature X' of that frame, and the template is the
running mean of all embedding matrices so far:

    TP_t = (t - 1)/t * TP_{t-1} + 1/t * I_t

The attention map for the current frame is ``A = TP @ q(X)`` with ``q(X)``
flattened to ``(c_tp, HW)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .config import ModelConfig
from .errors import DimensionError
from .nn import Conv2d, Module
from .short_term import SimilarityMap, pool_heat
from .tensor import Tensor


@dataclass
class LongTemplate:
    tp: Tensor
    t: int

    @classmethod
    def empty(cls, c_tp: int) -> "LongTemplate":
        return cls(Tensor(np.zeros((c_tp, c_tp))), 0)

    def detach(self) -> "LongTemplate":
        return LongTemplate(self.tp.detach(), self.t)


def update_template(prev: LongTemplate, i: Tensor) -> LongTemplate:
    if prev.tp.shape != i.shape:
        raise DimensionError(f"template {prev.tp.shape} and embedding matrix {i.shape} differ")
    t = prev.t + 1
    with T.stage("update"):
        tp = T.add(T.mul(prev.tp, (t - 1) / t), T.mul(i, 1.0 / t))
    return LongTemplate(tp, t)


class Branch(Module):
    """Pointwise conv -> LeakyReLU -> grouped k x k conv."""

    def __init__(self, c_in: int, cfg: ModelConfig, rng: np.random.Generator):
        self.alpha = cfg.alpha
        self.pw = Conv2d(c_in, cfg.c_tp, 1, rng)
        self.gc = Conv2d(cfg.c_tp, cfg.c_tp, cfg.group_kernel, rng, groups=cfg.groups)

    def __call__(self, x: Tensor) -> Tensor:
        return self.gc(T.leaky_relu(self.pw(x), self.alpha))


class TemplateAttention(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.alpha = cfg.alpha
        self.mask_proj = Conv2d(cfg.c8 + 2, cfg.c8, 3, rng)
        self.f = Branch(cfg.c8, cfg, rng)
        self.g = Branch(cfg.c8, cfg, rng)
        self.q = Branch(cfg.c8, cfg, rng)
        self.fuse = Conv2d(cfg.c_tp + cfg.c8, cfg.c_sim, 3, rng)

    def mask_feature(self, f8: Tensor, heat) -> Tensor:
        x = T.concat([f8, pool_heat(heat, f8)], axis=0)
        return T.leaky_relu(self.mask_proj(x), self.alpha)

    def branch(self, x: Tensor, which: str) -> Tensor:
        return {"f": self.f, "g": self.g, "q": self.q}[which](x)

    def embedding_matrix(self, x_prev: Tensor) -> Tensor:
        f = self.f(x_prev)
        g = self.g(x_prev)
        c = f.shape[0]
        with T.stage("update"):
            gram = T.matmul(T.reshape(f, (c, -1)), T.transpose(T.reshape(g, (c, -1))))
            return T.softmax(gram, axis=1)

    def attend(self, tp: LongTemplate, x_cur: Tensor) -> tuple[Tensor, SimilarityMap]:
        if tp.t < 1:
            raise DimensionError("attend needs a template with at least one folded-in frame")
        q = self.q(x_cur)
        c, h, w = q.shape
        with T.stage("read"):
            a = T.reshape(T.matmul(tp.tp, T.reshape(q, (c, h * w))), (c, h, w))
        s = T.leaky_relu(self.fuse(T.concat([a, x_cur], axis=0)), self.alpha)
        return a, SimilarityMap(s, "long")


class LongFallback(Module):
    """Replacement when long-term matching is ablated: convs over concat(f8_t, heat)."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.alpha = cfg.alpha
        self.conv1 = Conv2d(cfg.c8 + 2, cfg.c8, 3, rng)
        self.conv2 = Conv2d(cfg.c8, cfg.c_sim, 3, rng)

    def __call__(self, f8: Tensor, heat_prev) -> SimilarityMap:
        x = T.concat([f8, pool_heat(heat_prev, f8)], axis=0)
        x = T.leaky_relu(self.conv1(x), self.alpha)
        return SimilarityMap(T.leaky_relu(self.conv2(x), self.alpha), "long")
