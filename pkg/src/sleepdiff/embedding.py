"""Raw-signal tokenisation: one 30-s, 100-Hz channel -> 20 tokens of width d."""

from __future__ import annotations

import numpy as np

from .config import EPOCH_SAMPLES, MODALITIES
from .numerics import Module, Parameter, RngTree, Tensor, normal_init, ops, uniform_init
from .numerics.tensor import DimensionError

N_TOKENS = 20
TOKEN_STRIDE = EPOCH_SAMPLES // N_TOKENS  # 150 samples per token
KERNEL = 7
POOLS = (5, 5, 6)


class ConvStack(Module):
    """Three (conv1d -> GELU -> max-pool) blocks, channels 1 -> d/4 -> d/2 -> d."""

    def __init__(self, d: int, rng: RngTree, dtype=np.float32):
        channels = (1, d // 4, d // 2, d)
        self._blocks = []
        for i in range(3):
            g = rng.child(f"conv{i}").generator()
            fan_in = channels[i] * KERNEL
            w = uniform_init(g, (channels[i + 1], channels[i], KERNEL), fan_in, dtype)
            b = uniform_init(g, (channels[i + 1],), fan_in, dtype)
            setattr(self, f"w{i}", w)
            setattr(self, f"b{i}", b)
            self._blocks.append((w, b, POOLS[i]))

    def __call__(self, x: Tensor) -> Tensor:
        # x: (E, 1, T) -> (E, N_TOKENS, d)
        h = x
        for w, b, pool in self._blocks:
            h = ops.max_pool1d(ops.gelu(ops.conv1d(h, w, b, stride=1, padding=KERNEL // 2)), pool)
        return ops.swapaxes(h, 1, 2)


class PatchStack(Module):
    """Non-overlapping 150-sample patches, each projected linearly to d."""

    def __init__(self, d: int, rng: RngTree, dtype=np.float32):
        g = rng.child("patch").generator()
        self.W = uniform_init(g, (TOKEN_STRIDE, d), TOKEN_STRIDE, dtype)
        self.b = uniform_init(g, (d,), TOKEN_STRIDE, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        E = x.shape[0]
        return ops.linear(x.reshape(E, N_TOKENS, TOKEN_STRIDE), self.W, self.b)


class SignalEmbedding(Module):
    """Per-modality tokenisers, positional tables and global-token seeds."""

    def __init__(self, d: int, rng: RngTree, dtype=np.float32, patching: bool = False, dropout: float = 0.0):
        self.d = d
        self.dropout = dropout
        stack = PatchStack if patching else ConvStack
        self.stacks = {m: stack(d, rng.child(f"stack_{m}"), dtype) for m in MODALITIES}
        self.pos = {m: normal_init(rng.child(f"pos_{m}").generator(), (N_TOKENS, d), 0.02, dtype)
                    for m in MODALITIES}
        self.glob = {m: normal_init(rng.child(f"glob_{m}").generator(), (d,), 0.02, dtype)
                     for m in MODALITIES}
        self._rng = None

    def set_dropout_rng(self, rng: np.random.Generator | None) -> None:
        self._rng = rng

    def embed_epoch(self, x, modality: str) -> Tensor:
        """Signals (E, 3000) or (3000,) -> tokens (E, 20, d) or (20, d)."""
        x = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=self.pos[modality].dtype))
        single = x.ndim == 1
        if x.shape[-1] != EPOCH_SAMPLES:
            raise DimensionError(f"embed_epoch: expected {EPOCH_SAMPLES} samples, got {x.shape[-1]}")
        E = 1 if single else x.shape[0]
        tokens = self.stacks[modality](x.reshape(E, 1, EPOCH_SAMPLES))
        tokens = tokens + self.pos[modality]
        tokens = ops.dropout(tokens, self.dropout, self._rng, self.training)
        return tokens.reshape(N_TOKENS, self.d) if single else tokens

    def global_token(self, modality: str) -> Parameter:
        """The learnable seed vector for one modality, shape (d,)."""
        return self.glob[modality]


def receptive_field(token: int) -> tuple[int, int]:
    """Inclusive input-sample span that can influence one conv-stack token."""
    lo, hi = token, token
    for pool in reversed(POOLS):
        lo, hi = lo * pool, hi * pool + pool - 1
        lo, hi = lo - KERNEL // 2, hi + KERNEL // 2
    return max(lo, 0), min(hi, EPOCH_SAMPLES - 1)
