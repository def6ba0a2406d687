"""Seeded, path-addressed random streams.

Each module draws from a generator keyed by (seed, path), so adding or
removing a module never shifts the numbers another module sees.
"""

from __future__ import annotations

import zlib

import numpy as np


class RngTree:
    def __init__(self, seed: int, path: tuple[str, ...] = ()):
        self.seed = int(seed)
        self.path = path

    def child(self, name: str) -> "RngTree":
        return RngTree(self.seed, self.path + (str(name),))

    def generator(self) -> np.random.Generator:
        key = tuple(zlib.crc32(p.encode()) for p in self.path)
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=key))

    def __repr__(self) -> str:
        return f"RngTree({self.seed}, {'/'.join(self.path) or '<root>'})"
