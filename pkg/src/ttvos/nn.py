"""Parameter containers and the two layer types the model is built from."""

from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .errors import DimensionError
from .tensor import Tensor


class Parameter(Tensor):
    __slots__ = ("name",)

    def __init__(self, data, name: str = ""):
        super().__init__(data, requires_grad=True)
        self.name = name


class Module:
    """Attribute-walking parameter registry.

    Parameters are named by their dotted attribute path; attribute definition
    order fixes the iteration order, which keeps checkpoints and optimizer
    state deterministic.
    """

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Parameter]]:
        out = []
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, Parameter):
                out.append((name, val))
            elif isinstance(val, Module):
                out.extend(val.named_parameters(name + "."))
        return out

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def assign_names(self) -> None:
        for name, p in self.named_parameters():
            p.name = name

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def num_params(self) -> int:
        return sum(p.size for p in self.parameters())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise DimensionError(f"checkpoint mismatch: missing={missing} unexpected={unexpected}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=T.DTYPE)
            if arr.shape != p.shape:
                raise DimensionError(f"{name}: checkpoint shape {arr.shape} != model shape {p.shape}")
            p.data = arr.copy()


def he_uniform(rng: np.random.Generator, shape, fan_in: int, alpha: float = 0.01) -> np.ndarray:
    bound = math.sqrt(6.0 / ((1.0 + alpha * alpha) * fan_in))
    return rng.uniform(-bound, bound, size=shape)


class Conv2d(Module):
    def __init__(self, c_in, c_out, k, rng, stride=1, padding=None, groups=1):
        if c_in % groups or c_out % groups:
            raise DimensionError(f"channels ({c_in}, {c_out}) not divisible by groups {groups}")
        self.stride = stride
        self.padding = k // 2 if padding is None else padding
        self.groups = groups
        self.weight = Parameter(he_uniform(rng, (c_out, c_in // groups, k, k), (c_in // groups) * k * k))
        self.bias = Parameter(np.zeros(c_out))

    @property
    def k(self) -> int:
        return self.weight.shape[2]

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.weight, self.bias, self.stride, self.padding, self.groups)


class ConvTranspose2d(Module):
    def __init__(self, c_in, c_out, k, rng, stride=1, padding=0):
        self.stride = stride
        self.padding = padding
        # each output pixel receives (k/stride)^2 taps per input channel
        fan_in = max(1, c_in * (k // stride) ** 2)
        self.weight = Parameter(he_uniform(rng, (c_in, c_out, k, k), fan_in))
        self.bias = Parameter(np.zeros(c_out))

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv_transpose2d(x, self.weight, self.bias, self.stride, self.padding)
