"""Dump per-layer attention maps as CSV with a JSON index, plus SVG heat strips."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

import numpy as np

from ..attention import AttentionRecord, explode_records
from ..config import EPOCH_SAMPLES, MODALITIES
from ..embedding import N_TOKENS, TOKEN_STRIDE
from ..model import SleepDiffFormer

EXPORT_KINDS = ("dsa", "dca")
INDEX_NAME = "index.json"


def record_filename(rec: AttentionRecord) -> str:
    return f"{rec.kind}_L{rec.layer}_H{rec.head}_{rec.modality}_E{rec.epoch:02d}.csv"


def collect_records(model: SleepDiffFormer, sequence: np.ndarray) -> list[AttentionRecord]:
    """Attention records for one (N, 2, 3000) sequence, dropout off."""
    x = np.asarray(sequence)[None]
    sink: list = []
    was_training = model.training
    model.eval()
    try:
        model(x, sink)
    finally:
        model.train(was_training)
    return [r for r in explode_records(sink) if r.kind in EXPORT_KINDS]


def export_attention(model: SleepDiffFormer, sequence: np.ndarray, path: str | Path,
                     svg: bool = True) -> Path:
    """Write one CSV per (kind, layer, head, modality, epoch) map and ``index.json``.

    Returns the index path.
    """
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    records = collect_records(model, sequence)
    index = []
    for rec in records:
        name = record_filename(rec)
        np.savetxt(out / name, rec.map, delimiter=",", fmt="%.9e")
        index.append({
            "file": name, "kind": rec.kind, "layer": rec.layer, "head": rec.head,
            "modality": rec.modality, "epoch": rec.epoch, "lambda": rec.lam,
        })
    if svg:
        for layer in sorted({r.layer for r in records}):
            for m, modality in enumerate(MODALITIES):
                sel = [r for r in records if r.kind == "dsa" and r.layer == layer and r.modality == modality]
                if sel:
                    svg_path = out / f"strip_L{layer}_{modality}.svg"
                    svg_path.write_text(heat_strip_svg(sel, np.asarray(sequence)[:, m]))
    index_path = out / INDEX_NAME
    index_path.write_text(json.dumps(index, indent=1))
    return index_path


def load_index(path: str | Path) -> list[dict]:
    return json.loads(Path(path).read_text())


def token_weights(records: list[AttentionRecord], epoch: int) -> np.ndarray:
    """Head-averaged attention from the global token onto the series tokens of one epoch."""
    rows = [r.map[-1, :N_TOKENS] for r in records if r.epoch == epoch]
    return np.mean(rows, axis=0)


def heat_strip_svg(records: list[AttentionRecord], waveforms: np.ndarray, width: int = 900,
                   row_height: int = 40, title: Optional[str] = None) -> str:
    """One row per epoch: waveform trace over a strip coloured by token weight.

    Each token's weight covers the 150 samples it was pooled from.
    """
    epochs = sorted({r.epoch for r in records})
    first = records[0]
    title = title or f"layer {first.layer} {first.modality}"
    sx = width / EPOCH_SAMPLES
    h = row_height * len(epochs) + 20
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{h}" viewBox="0 0 {width} {h}">',
        f'<text x="2" y="13" font-size="11" font-family="monospace">{title}</text>',
    ]
    for row, e in enumerate(epochs):
        y0 = 20 + row * row_height
        w = token_weights(records, e)
        lo, hi = float(w.min()), float(w.max())
        scale = (w - lo) / (hi - lo) if hi > lo else np.zeros_like(w)
        for t in range(N_TOKENS):
            shade = int(255 - 200 * scale[t])
            parts.append(
                f'<rect x="{t * TOKEN_STRIDE * sx:.2f}" y="{y0}" width="{TOKEN_STRIDE * sx:.2f}" '
                f'height="{row_height - 2}" fill="rgb(255,{shade},{shade})"/>'
            )
        sig = np.asarray(waveforms[e], dtype=np.float64)[::5]
        peak = np.abs(sig).max() or 1.0
        ys = y0 + (row_height - 2) / 2 - sig / peak * (row_height / 2 - 3)
        xs = np.arange(sig.size) * 5 * sx
        d = "M" + " L".join(f"{x:.1f},{y:.1f}" for x, y in zip(xs, ys))
        parts.append(f'<path d="{d}" fill="none" stroke="black" stroke-width="0.6"/>')
    parts.append("</svg>")
    return "\n".join(parts)
