"""Parameter containers with stable, dotted names."""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from .tensor import Tensor


class Parameter(Tensor):
    """A leaf tensor the optimizer updates."""

    __slots__ = ()

    def __init__(self, data, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)


class Module:
    """Base class; parameters and submodules are discovered from attributes.

    Attributes whose names start with an underscore are not traversed. A
    tensor reachable from several places is reported once, under the first
    name found.
    """

    training: bool = True

    def named_parameters(self, prefix: str = "", _seen: set | None = None) -> Iterator[tuple[str, Parameter]]:
        seen = set() if _seen is None else _seen
        for key, value in vars(self).items():
            if key.startswith("_"):
                continue
            if isinstance(value, (list, tuple)):
                items = [(f"{prefix}{key}.{i}", v) for i, v in enumerate(value)]
            elif isinstance(value, dict):
                items = [(f"{prefix}{key}.{k}", v) for k, v in value.items()]
            else:
                items = [(f"{prefix}{key}", value)]
            for name, item in items:
                if isinstance(item, Parameter):
                    if id(item) not in seen:
                        seen.add(id(item))
                        yield name, item
                elif isinstance(item, Module):
                    yield from item.named_parameters(name + ".", seen)

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def modules(self) -> Iterator["Module"]:
        yield self
        for key, value in vars(self).items():
            if key.startswith("_"):
                continue
            items = value if isinstance(value, (list, tuple)) else (
                value.values() if isinstance(value, dict) else (value,))
            for item in items:
                if isinstance(item, Module):
                    yield from item.modules()

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


def uniform_init(rng: np.random.Generator, shape, fan_in: int, dtype) -> Parameter:
    bound = 1.0 / math.sqrt(fan_in)
    return Parameter(rng.uniform(-bound, bound, size=shape).astype(dtype))


def normal_init(rng: np.random.Generator, shape, std: float, dtype) -> Parameter:
    return Parameter((rng.standard_normal(shape) * std).astype(dtype))


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, dtype=np.float32, bias: bool = True):
        self.W = uniform_init(rng, (d_in, d_out), d_in, dtype)
        self.b = uniform_init(rng, (d_out,), d_in, dtype) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        from .ops import linear
        return linear(x, self.W, self.b)


class LayerNorm(Module):
    def __init__(self, d: int, dtype=np.float32, eps: float = 1e-5):
        self.gamma = Parameter(np.ones(d, dtype=dtype))
        self.beta = Parameter(np.zeros(d, dtype=dtype))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        from .ops import layer_norm
        return layer_norm(x, self.gamma, self.beta, self.eps)
