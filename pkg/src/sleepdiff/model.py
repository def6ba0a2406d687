"""Full two-stream model: signal embedding -> MDTA stack -> sequence encoders -> heads."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .attention import AttentionCapture
from .config import EPOCH_SAMPLES, ExperimentConfig
from .embedding import SignalEmbedding
from .mdta import MdtaLayer, mdta_stack
from .numerics import Module, RngTree, Tensor
from .numerics.tensor import DimensionError
from .sequence import Classifier, Decoder, InterEpochEncoder, fuse_epoch


@dataclass
class ModelOutput:
    logits: Tensor   # (B, N, 5)
    recon: Tensor    # (B, N, 2, 3000)
    s_bar: Tensor    # (B, N, 2d) encoded pooled series features
    g_bar: Tensor    # (B, N, 2d) encoded fused global tokens
    captures: list[AttentionCapture] = field(default_factory=list)


class SleepDiffFormer(Module):
    def __init__(self, config: ExperimentConfig):
        self.config = config
        c, f = config, config.flags
        dtype = config.np_dtype
        rng = RngTree(config.seed).child("model")
        self.embedding = SignalEmbedding(c.d, rng.child("embedding"), dtype, patching=not f.se, dropout=c.dropout)
        self.layers = [
            MdtaLayer(c.d, c.mdta_heads, i + 1, rng.child(f"layer{i}"), dtype,
                      differential=f.da, cross=f.ca, dropout=c.dropout, lambda_std=c.lambda_std)
            for i in range(c.n_layers)
        ]
        width = 2 * c.d
        self.seq_g = InterEpochEncoder(width, c.seq_heads, rng.child("seq_g"), dtype,
                                       differential=not f.id, lambda_std=c.lambda_std)
        self.seq_s = InterEpochEncoder(width, c.seq_heads, rng.child("seq_s"), dtype,
                                       differential=not f.id, lambda_std=c.lambda_std)
        self.classifier = Classifier(width, rng.child("classifier"), dtype)
        self.decoder = Decoder(width, rng.child("decoder"), dtype)
        self.reset_dropout()

    def reset_dropout(self, seed: Optional[int] = None) -> None:
        seed = self.config.seed if seed is None else seed
        g = RngTree(seed).child("dropout").generator()
        self.embedding.set_dropout_rng(g)
        for layer in self.layers:
            layer.set_dropout_rng(g)

    @property
    def dtype(self):
        return self.config.np_dtype

    def encode_epochs(self, eeg, eog, sink: Optional[list] = None) -> tuple[Tensor, Tensor, Tensor, Tensor]:
        """(E, 3000) per modality -> MDTA outputs (S_eeg, G_eeg, S_eog, G_eog)."""
        eeg = eeg if isinstance(eeg, Tensor) else Tensor(np.asarray(eeg, dtype=self.dtype))
        eog = eog if isinstance(eog, Tensor) else Tensor(np.asarray(eog, dtype=self.dtype))
        E = eeg.shape[0]
        zeros = Tensor(np.zeros((E, 1, self.config.d), dtype=self.dtype))
        s_eeg = self.embedding.embed_epoch(eeg, "eeg")
        s_eog = self.embedding.embed_epoch(eog, "eog")
        g_eeg = zeros + self.embedding.global_token("eeg")
        g_eog = zeros + self.embedding.global_token("eog")
        return mdta_stack(s_eeg, g_eeg, s_eog, g_eog, self.layers, sink)

    def __call__(self, x, sink: Optional[list] = None) -> ModelOutput:
        """x: (B, N, 2, 3000) with channel 0 = EEG, 1 = EOG."""
        x = np.asarray(x.data if isinstance(x, Tensor) else x, dtype=self.dtype)
        if x.ndim != 4 or x.shape[2:] != (2, EPOCH_SAMPLES):
            raise DimensionError(f"model input must be (B, N, 2, {EPOCH_SAMPLES}), got {x.shape}")
        B, N = x.shape[:2]
        flat = x.reshape(B * N, 2, EPOCH_SAMPLES)
        s_eeg, g_eeg, s_eog, g_eog = self.encode_epochs(flat[:, 0], flat[:, 1], sink)
        g, s = fuse_epoch(g_eeg, g_eog, s_eeg, s_eog)
        width = g.shape[-1]
        g_bar = self.seq_g(g.reshape(B, N, width), sink, "global")
        s_bar = self.seq_s(s.reshape(B, N, width), sink, "series")
        logits = self.classifier(g_bar)
        recon = self.decoder(s_bar)
        return ModelOutput(logits, recon, s_bar, g_bar, sink if sink is not None else [])

    def predict(self, x) -> np.ndarray:
        was_training = self.training
        self.eval()
        try:
            return self(x).logits.data.argmax(axis=-1)
        finally:
            self.train(was_training)


def build_model(config: ExperimentConfig) -> SleepDiffFormer:
    return SleepDiffFormer(config)
