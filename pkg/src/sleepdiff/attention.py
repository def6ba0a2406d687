"""Differential attention and the standard multi-head attention it replaces.

Tensors carry arbitrary leading batch axes; the last two are (tokens, features).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .numerics import LayerNorm, Module, RngTree, Tensor, normal_init, ops, uniform_init
from .numerics.tensor import DimensionError


def lambda_init(layer: int) -> float:
    """Depth schedule for the subtraction weight: 0.8 - 0.6 * exp(-0.3 (l - 1))."""
    if layer < 1:
        raise ValueError("layer index is 1-based")
    return 0.8 - 0.6 * math.exp(-0.3 * (layer - 1))


@dataclass
class AttentionCapture:
    """Maps from one attention call over a whole batch.

    ``maps`` has shape (*lead, heads, n_q, n_k); ``lam`` has shape (heads,).
    """

    kind: str
    modality: str
    layer: int
    maps: np.ndarray
    lam: np.ndarray


@dataclass
class AttentionRecord:
    layer: int
    head: int
    modality: str
    kind: str
    epoch: int
    lam: float
    map: np.ndarray


def explode_records(captures: list[AttentionCapture]) -> list[AttentionRecord]:
    """Split batched captures into one record per (epoch, head)."""
    records = []
    for cap in captures:
        maps = cap.maps.reshape(-1, *cap.maps.shape[-3:])
        for e in range(maps.shape[0]):
            for h in range(maps.shape[1]):
                records.append(AttentionRecord(
                    cap.layer, h + 1, cap.modality, cap.kind, e, float(cap.lam[h]), maps[e, h]))
    return records


class LambdaParams(Module):
    """Per-head re-parameterisation
    lam = exp(q1 . k1) - exp(q2 . k2) + lambda_init(layer)."""

    def __init__(self, heads: int, head_dim: int, layer: int, rng: RngTree, dtype=np.float32, std: float = 0.1):
        g = rng.generator()
        self.q1 = normal_init(g, (heads, head_dim), std, dtype)
        self.k1 = normal_init(g, (heads, head_dim), std, dtype)
        self.q2 = normal_init(g, (heads, head_dim), std, dtype)
        self.k2 = normal_init(g, (heads, head_dim), std, dtype)
        self.layer = layer
        self.init = lambda_init(layer)

    def value(self) -> Tensor:
        a = ops.exp((self.q1 * self.k1).sum(axis=-1))
        b = ops.exp((self.q2 * self.k2).sum(axis=-1))
        return a - b + self.init


def lambda_value(params: LambdaParams) -> np.ndarray:
    """Current per-head lambda as plain numbers."""
    return params.value().data.copy()


def diff_attn_head(q1: Tensor, q2: Tensor, k1: Tensor, k2: Tensor, v: Tensor, lam) -> tuple[Tensor, Tensor]:
    """softmax(q1 k1^T / sqrt(d')) - lam * softmax(q2 k2^T / sqrt(d')), applied to v.

    Returns (map @ v, map). ``lam`` may be a float or a tensor broadcasting
    against the leading axes of the map.
    """
    scale = 1.0 / math.sqrt(q1.shape[-1])
    a1 = ops.softmax(ops.matmul(q1, ops.swapaxes(k1, -1, -2)) * scale)
    a2 = ops.softmax(ops.matmul(q2, ops.swapaxes(k2, -1, -2)) * scale)
    m = a1 - lam * a2
    return ops.matmul(m, v), m


def _split_heads(x: Tensor, heads: int) -> Tensor:
    # (*lead, n, h*w) -> (*lead, h, n, w)
    *lead, n, width = x.shape
    nl = len(lead)
    x = x.reshape(*lead, n, heads, width // heads)
    return ops.transpose(x, tuple(range(nl)) + (nl + 1, nl, nl + 2))


def _merge_heads(x: Tensor) -> Tensor:
    # (*lead, h, n, w) -> (*lead, n, h*w)
    *lead, h, n, w = x.shape
    nl = len(lead)
    x = ops.transpose(x, tuple(range(nl)) + (nl + 1, nl, nl + 2))
    return x.reshape(*lead, n, h * w)


class DiffAttention(Module):
    """Multi-head differential attention.

    Each head owns a 2d'-wide slice of the Q/K/V projections; the first d'
    columns of its Q and K slice give (Q1, K1), the second (Q2, K2).
    """

    def __init__(self, d: int, heads: int, lambdas: LambdaParams, rng: RngTree,
                 dtype=np.float32, head_norm: bool = True):
        if d % (2 * heads):
            raise DimensionError(f"d={d} not divisible by 2*heads={2 * heads}")
        g = rng.generator()
        self.d, self.heads, self.head_dim = d, heads, d // (2 * heads)
        self.W_q = uniform_init(g, (d, d), d, dtype)
        self.W_k = uniform_init(g, (d, d), d, dtype)
        self.W_v = uniform_init(g, (d, d), d, dtype)
        self.W_o = uniform_init(g, (d, d), d, dtype)
        self.lambdas = lambdas
        self.head_norm = head_norm

    def __call__(self, xq: Tensor, xkv: Tensor, sink: Optional[list] = None,
                 kind: str = "", modality: str = "") -> Tensor:
        if xq.shape[-1] != self.d or xkv.shape[-1] != self.d:
            raise DimensionError(f"attention width {self.d} does not match inputs {xq.shape}, {xkv.shape}")
        dh = self.head_dim
        q = _split_heads(ops.linear(xq, self.W_q), self.heads)   # (*, h, nq, 2d')
        k = _split_heads(ops.linear(xkv, self.W_k), self.heads)
        v = _split_heads(ops.linear(xkv, self.W_v), self.heads)
        lam = self.lambdas.value()
        out, m = diff_attn_head(
            q[..., :dh], q[..., dh:], k[..., :dh], k[..., dh:], v, lam.reshape(self.heads, 1, 1))
        if self.head_norm:
            out = ops.rms_norm(out) * (1.0 - self.lambdas.init)
        if sink is not None:
            sink.append(AttentionCapture(kind, modality, self.lambdas.layer, m.data.copy(), lam.data.copy()))
        return ops.linear(_merge_heads(out), self.W_o)


class MultiHeadAttention(Module):
    """Standard scaled dot-product attention with h heads of width d/h."""

    def __init__(self, d: int, heads: int, rng: RngTree, dtype=np.float32, layer: int = 0):
        if d % heads:
            raise DimensionError(f"d={d} not divisible by heads={heads}")
        g = rng.generator()
        self.d, self.heads = d, heads
        self.W_q = uniform_init(g, (d, d), d, dtype)
        self.W_k = uniform_init(g, (d, d), d, dtype)
        self.W_v = uniform_init(g, (d, d), d, dtype)
        self.W_o = uniform_init(g, (d, d), d, dtype)
        self.layer = layer

    def __call__(self, xq: Tensor, xkv: Tensor, sink: Optional[list] = None,
                 kind: str = "", modality: str = "") -> Tensor:
        if xq.shape[-1] != self.d or xkv.shape[-1] != self.d:
            raise DimensionError(f"attention width {self.d} does not match inputs {xq.shape}, {xkv.shape}")
        q = _split_heads(ops.linear(xq, self.W_q), self.heads)
        k = _split_heads(ops.linear(xkv, self.W_k), self.heads)
        v = _split_heads(ops.linear(xkv, self.W_v), self.heads)
        scale = 1.0 / math.sqrt(self.d // self.heads)
        a = ops.softmax(ops.matmul(q, ops.swapaxes(k, -1, -2)) * scale)
        if sink is not None:
            sink.append(AttentionCapture(kind, modality, self.layer, a.data.copy(), np.zeros(self.heads)))
        return ops.linear(_merge_heads(ops.matmul(a, v)), self.W_o)


class AttentionBlock(Module):
    """attention, then residual add and layer norm on the query stream."""

    def __init__(self, attn: Module, d: int, dtype=np.float32):
        self.attn = attn
        self.norm = LayerNorm(d, dtype)

    def __call__(self, xq: Tensor, xkv: Tensor, sink=None, kind: str = "", modality: str = "") -> Tensor:
        return self.norm(xq + self.attn(xq, xkv, sink, kind, modality))


def multi_head_diff_attn(x_q: Tensor, x_kv: Tensor, params: DiffAttention) -> tuple[Tensor, list[AttentionRecord]]:
    sink: list[AttentionCapture] = []
    out = params(x_q, x_kv, sink, kind="attn")
    return out, explode_records(sink)


def dsa(series_and_global: Tensor, block: AttentionBlock, sink=None, modality: str = "") -> Tensor:
    """Self-attention over [series tokens; global token] with residual + norm."""
    return block(series_and_global, series_and_global, sink, "dsa", modality)


def dca(g_self: Tensor, g_other: Tensor, block: AttentionBlock, sink=None, modality: str = "") -> Tensor:
    """One modality's global token queries the other's, with residual + norm."""
    return block(g_self, g_other, sink, "dca", modality)
