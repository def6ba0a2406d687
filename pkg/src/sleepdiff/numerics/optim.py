"""Adam with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import DimensionError, Tensor


@dataclass
class AdamState:
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    t: int = 0


def adam_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray | None],
    state: AdamState,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    t: int | None = None,
) -> tuple[Sequence[np.ndarray], AdamState]:
    """One bias-corrected Adam update, applied in place to ``params``.

    ``t`` is the 1-based step count; it defaults to ``state.t + 1``. A
    ``None`` gradient is treated as zero.
    """
    if len(params) != len(grads):
        raise DimensionError(f"adam_step: {len(params)} params but {len(grads)} grads")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if len(state.m) != len(params):
        raise DimensionError("adam_step: optimizer state does not match parameter list")
    t = state.t + 1 if t is None else t
    if t < 1:
        raise ValueError("adam_step: t must be >= 1")
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            g = np.zeros_like(p)
        if g.shape != p.shape or m.shape != p.shape:
            raise DimensionError(f"adam_step: shapes {p.shape}, {g.shape}, {m.shape} disagree")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    state.t = t
    return params, state


class Adam:
    """Optimizer over a fixed list of parameter tensors."""

    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.state = AdamState()

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        adam_step(
            [p.data for p in self.params], [p.grad for p in self.params], self.state,
            self.lr, self.beta1, self.beta2, self.eps,
        )
