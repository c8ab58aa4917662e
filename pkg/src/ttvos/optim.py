"""Adam with bias-corrected moments."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params, grads, state: AdamState, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8) -> AdamState:
    """Update ``params`` (name -> array) in place from ``grads`` (name -> array or None).

    Missing or None gradients are treated as zero. Returns ``state`` advanced
    by one step.
    """
    state.step += 1
    bc1 = 1.0 - beta1**state.step
    bc2 = 1.0 - beta2**state.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        elif g.shape != p.shape:
            raise DimensionError(f"{name}: gradient shape {g.shape} != parameter shape {p.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return state


class Adam:
    def __init__(self, named_params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(named_params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.state = AdamState()

    def step(self, scale: float = 1.0) -> None:
        """Apply one update using the accumulated ``.grad`` of every parameter times ``scale``."""
        params = {name: p.data for name, p in self.params}
        grads = {name: None if p.grad is None else p.grad * scale for name, p in self.params}
        adam_step(params, grads, self.state, self.lr, self.beta1, self.beta2, self.eps)

    def zero_grad(self) -> None:
        for _, p in self.params:
            p.grad = None
