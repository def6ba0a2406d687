"""Cutting recordings into fixed-length epoch sequences."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .container import Recording

log = logging.getLogger(__name__)

N_SEQ = 20


@dataclass
class SequenceSet:
    """Stacked sequences of one domain: x (k, N, 2, 3000), y (k, N)."""

    x: np.ndarray
    y: np.ndarray
    domain_id: int

    def __len__(self) -> int:
        return self.x.shape[0]


def assemble_sequences(n_epochs: int, n_seq: int = N_SEQ, stride: int = N_SEQ) -> list[range]:
    """Epoch index windows for one recording; a short tail is dropped."""
    if n_epochs < n_seq:
        log.info("recording with %d epochs yields no %d-epoch sequence", n_epochs, n_seq)
        return []
    return [range(s, s + n_seq) for s in range(0, n_epochs - n_seq + 1, stride)]


def sequences_from_recordings(recordings: Iterable[Recording], n_seq: int = N_SEQ,
                              stride: int = N_SEQ) -> SequenceSet:
    xs, ys, domain = [], [], None
    for rec in recordings:
        domain = rec.domain_id if domain is None else domain
        for window in assemble_sequences(rec.n_epochs, n_seq, stride):
            sl = slice(window.start, window.stop)
            xs.append(rec.signals[sl])
            ys.append(rec.labels[sl])
    if not xs:
        return SequenceSet(np.zeros((0, n_seq, 2, 3000), np.float32), np.zeros((0, n_seq), np.int64),
                           -1 if domain is None else domain)
    return SequenceSet(np.stack(xs), np.stack(ys).astype(np.int64), domain)


def concat_sets(sets: Sequence[SequenceSet]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Merge several domains: (x, y, domain id per sequence)."""
    x = np.concatenate([s.x for s in sets])
    y = np.concatenate([s.y for s in sets])
    dom = np.concatenate([np.full(len(s), s.domain_id) for s in sets])
    return x, y, dom
