"""Multi-channel differential transformer layer and stack."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .attention import AttentionBlock, DiffAttention, LambdaParams, MultiHeadAttention, dca, dsa
from .numerics import LayerNorm, Linear, Module, RngTree, Tensor, ops


class MdtaLayer(Module):
    """Per-modality self-attention, cross-modal attention on the global
    tokens, then a token-wise MLP with residual and layer norm.

    ``differential=False`` swaps every attention for the standard kind;
    ``cross=False`` drops the cross-modal step so the streams never mix.
    """

    def __init__(self, d: int, heads: int, layer: int, rng: RngTree, dtype=np.float32,
                 differential: bool = True, cross: bool = True, dropout: float = 0.0,
                 lambda_std: float = 0.1):
        self.layer = layer
        self.dropout = dropout
        if differential:
            # one lambda set per layer, shared by both self-attentions and the cross-attention
            self.lambdas = LambdaParams(heads, d // (2 * heads), layer, rng.child("lambda"), dtype, lambda_std)

        def attention(name: str) -> Module:
            if differential:
                return DiffAttention(d, heads, self.lambdas, rng.child(name), dtype)
            return MultiHeadAttention(d, heads, rng.child(name), dtype, layer=layer)

        self.dsa = {m: AttentionBlock(attention(f"dsa_{m}"), d, dtype) for m in ("eeg", "eog")}
        self.dca = AttentionBlock(attention("dca"), d, dtype) if cross else None
        self.mlp_in = Linear(d, 4 * d, rng.child("mlp_in").generator(), dtype)
        self.mlp_out = Linear(4 * d, d, rng.child("mlp_out").generator(), dtype)
        self.mlp_norm = LayerNorm(d, dtype)
        self._rng = None

    def set_dropout_rng(self, rng: Optional[np.random.Generator]) -> None:
        self._rng = rng

    def mlp(self, x: Tensor) -> Tensor:
        h = self.mlp_out(ops.gelu(self.mlp_in(x)))
        h = ops.dropout(h, self.dropout, self._rng, self.training)
        return self.mlp_norm(h + x)

    def __call__(self, s_eeg: Tensor, g_eeg: Tensor, s_eog: Tensor, g_eog: Tensor,
                 sink: Optional[list] = None) -> tuple[Tensor, Tensor, Tensor, Tensor]:
        n = s_eeg.shape[-2]
        streams = {}
        for m, s, g in (("eeg", s_eeg, g_eeg), ("eog", s_eog, g_eog)):
            x = dsa(ops.concat([s, g], axis=-2), self.dsa[m], sink, m)
            streams[m] = (x[..., :n, :], x[..., n:, :])
        if self.dca is not None:
            ge, go = streams["eeg"][1], streams["eog"][1]
            streams["eeg"] = (streams["eeg"][0], dca(ge, go, self.dca, sink, "eeg"))
            streams["eog"] = (streams["eog"][0], dca(go, ge, self.dca, sink, "eog"))
        out = []
        for m in ("eeg", "eog"):
            s, g = streams[m]
            y = self.mlp(ops.concat([s, g], axis=-2))
            out.extend([y[..., :n, :], y[..., n:, :]])
        return out[0], out[1], out[2], out[3]


def mdta_stack(s_eeg: Tensor, g_eeg: Tensor, s_eog: Tensor, g_eog: Tensor,
               layers: Sequence[MdtaLayer], sink: Optional[list] = None) -> tuple[Tensor, Tensor, Tensor, Tensor]:
    if not layers:
        raise ValueError("mdta_stack needs at least one layer")
    for layer in layers:
        s_eeg, g_eeg, s_eog, g_eog = layer(s_eeg, g_eeg, s_eog, g_eog, sink)
    return s_eeg, g_eeg, s_eog, g_eog
