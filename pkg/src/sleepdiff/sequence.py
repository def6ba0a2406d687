"""Epoch fusion, inter-epoch encoding, classification and reconstruction."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .attention import AttentionBlock, DiffAttention, LambdaParams, MultiHeadAttention
from .config import EPOCH_SAMPLES, N_CLASSES
from .numerics import Linear, Module, RngTree, Tensor, ops, uniform_init
from .numerics.tensor import DimensionError

DECODER_STRIDES = (5, 5, 5, 3, 2)
DECODER_START = 4


def fuse_epoch(g_eeg: Tensor, g_eog: Tensor, s_eeg: Tensor, s_eog: Tensor) -> tuple[Tensor, Tensor]:
    """Concatenate modalities feature-wise; average series tokens over positions.

    Global tokens are (..., 1, d) or (..., d); series tokens (..., n, d).
    Returns (g, s), each (..., 2d).
    """
    if g_eeg.ndim == s_eeg.ndim:
        g_eeg = g_eeg.reshape(*g_eeg.shape[:-2], g_eeg.shape[-1])
        g_eog = g_eog.reshape(*g_eog.shape[:-2], g_eog.shape[-1])
    g = ops.concat([g_eeg, g_eog], axis=-1)
    s = ops.concat([s_eeg, s_eog], axis=-1).mean(axis=-2)
    return g, s


class InterEpochEncoder(Module):
    """One attention layer over the epoch axis with residual + layer norm.

    No positional encoding, so the map is permutation-equivariant over epochs.
    """

    def __init__(self, width: int, heads: int, rng: RngTree, dtype=np.float32,
                 differential: bool = False, lambda_std: float = 0.1):
        if differential:
            self.lambdas = LambdaParams(heads, width // (2 * heads), 1, rng.child("lambda"), dtype, lambda_std)
            attn = DiffAttention(width, heads, self.lambdas, rng.child("attn"), dtype)
        else:
            attn = MultiHeadAttention(width, heads, rng.child("attn"), dtype, layer=1)
        self.block = AttentionBlock(attn, width, dtype)

    def __call__(self, seq: Tensor, sink: Optional[list] = None, modality: str = "") -> Tensor:
        return self.block(seq, seq, sink, "seq", modality)


def inter_epoch_encode(seq: Tensor, params: InterEpochEncoder, sink: Optional[list] = None) -> Tensor:
    return params(seq, sink)


class Classifier(Module):
    def __init__(self, width: int, rng: RngTree, dtype=np.float32):
        self.fc = Linear(width, N_CLASSES, rng.generator(), dtype)

    def __call__(self, g: Tensor) -> Tensor:
        return self.fc(g)


def classify(g_encoded: Tensor, params: Classifier) -> Tensor:
    """Per-epoch logits; no softmax."""
    return params(g_encoded)


class Decoder(Module):
    """Five transposed-conv blocks: (width/4 ch x 4 positions) -> (2 ch x 3000 samples)."""

    def __init__(self, width: int, rng: RngTree, dtype=np.float32):
        if width % DECODER_START:
            raise DimensionError(f"decoder width {width} not divisible by {DECODER_START}")
        c0 = width // DECODER_START
        channels = (c0, c0, c0 // 2, c0 // 2, c0 // 4, 2)
        self.width = width
        self._blocks = []
        for i, stride in enumerate(DECODER_STRIDES):
            g = rng.child(f"deconv{i}").generator()
            fan_in = channels[i] * stride
            w = uniform_init(g, (channels[i], channels[i + 1], stride), fan_in, dtype)
            b = uniform_init(g, (channels[i + 1],), fan_in, dtype)
            setattr(self, f"w{i}", w)
            setattr(self, f"b{i}", b)
            self._blocks.append((w, b, stride))

    def __call__(self, s: Tensor) -> Tensor:
        lead = s.shape[:-1]
        E = int(np.prod(lead)) if lead else 1
        h = s.reshape(E, self.width // DECODER_START, DECODER_START)
        last = len(self._blocks) - 1
        for i, (w, b, stride) in enumerate(self._blocks):
            h = ops.conv_transpose1d(h, w, b, stride=stride)
            if i < last:
                h = ops.gelu(h)
        return h.reshape(*lead, 2, EPOCH_SAMPLES)


def reconstruct(s_encoded: Tensor, params: Decoder) -> Tensor:
    """(..., width) -> (..., 2, 3000)."""
    return params(s_encoded)
