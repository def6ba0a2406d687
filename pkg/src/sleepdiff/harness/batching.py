"""Domain-balanced minibatches over several source pools."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Mapping

import numpy as np

from ..data.sequences import SequenceSet


@dataclass
class DomainBatch:
    x: np.ndarray        # (B, N, 2, 3000)
    y: np.ndarray        # (B, N)
    domains: np.ndarray  # (B,)
    index: np.ndarray    # (B,) position of each sequence inside its domain pool

    def __len__(self) -> int:
        return self.x.shape[0]

    def ids(self) -> list[tuple[int, int]]:
        return [(int(d), int(i)) for d, i in zip(self.domains, self.index)]


def per_domain_count(batch: int, n_domains: int) -> int:
    if n_domains < 1:
        raise ValueError("no source domains")
    if batch % n_domains:
        raise ValueError(f"batch {batch} not divisible by {n_domains} domains")
    return batch // n_domains


def epoch_batches(pools: Mapping[int, SequenceSet], batch: int,
                  rng: np.random.Generator) -> Iterator[DomainBatch]:
    """One pass over the pools, each domain drawn without replacement.

    Every batch holds ``batch // len(pools)`` sequences per domain. When a pool
    runs short the final batch takes what is left (at least one per domain);
    once any pool is empty the pass ends.
    """
    doms = sorted(pools)
    k = per_domain_count(batch, len(doms))
    if any(len(pools[d]) == 0 for d in doms):
        raise ValueError("empty source pool")
    orders = {d: rng.permutation(len(pools[d])) for d in doms}
    pos = 0
    while all(pos < len(orders[d]) for d in doms):
        take = {d: orders[d][pos:pos + k] for d in doms}
        pos += k
        yield build_batch(pools, take)


def build_batch(pools: Mapping[int, SequenceSet], take: Mapping[int, np.ndarray]) -> DomainBatch:
    """Stack the chosen sequences; domains appear in ascending id order."""
    xs, ys, ds, idx = [], [], [], []
    for d in sorted(take):
        sel = np.asarray(take[d], dtype=np.int64)
        xs.append(pools[d].x[sel])
        ys.append(pools[d].y[sel])
        ds.append(np.full(len(sel), d))
        idx.append(sel)
    return DomainBatch(np.concatenate(xs), np.concatenate(ys), np.concatenate(ds), np.concatenate(idx))
