"""SLPD: a little-endian container for labelled two-channel epoch recordings.

Layout of one record (a file holds one or more records back to back)::

    magic   4 bytes  b"SLPD"
    version u32      1
    n_epochs u32
    channels u8      2
    samples_per_epoch u32   3000
    rate_hz u16      100
    domain_id u16
    labels  n_epochs x u8
    samples n_epochs x channels x samples_per_epoch x f32
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from ..config import EPOCH_SAMPLES, N_CLASSES, SAMPLE_RATE

MAGIC = b"SLPD"
VERSION = 1
HEADER = struct.Struct("<4sIIBIHH")
HEADER_SIZE = HEADER.size  # 21
CHANNELS = 2


class ContainerError(Exception):
    code = 1


class BadMagicError(ContainerError):
    code = 2


class BadVersionError(ContainerError):
    code = 3


class TruncatedError(ContainerError):
    code = 4


class BadHeaderError(ContainerError):
    code = 5


@dataclass
class Recording:
    """Preprocessed epochs of one recording. ``signals`` is (n_epochs, 2, 3000)."""

    signals: np.ndarray
    labels: np.ndarray
    domain_id: int

    def __post_init__(self) -> None:
        self.signals = np.asarray(self.signals, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        if self.signals.ndim != 3 or self.signals.shape[1:] != (CHANNELS, EPOCH_SAMPLES):
            raise ValueError(f"signals must be (n, {CHANNELS}, {EPOCH_SAMPLES}), got {self.signals.shape}")
        if self.labels.shape != (self.signals.shape[0],):
            raise ValueError("one label per epoch required")
        if self.labels.size and self.labels.max() >= N_CLASSES:
            raise ValueError(f"labels must be < {N_CLASSES}")

    @property
    def n_epochs(self) -> int:
        return self.signals.shape[0]

    @property
    def eeg(self) -> np.ndarray:
        return self.signals[:, 0]

    @property
    def eog(self) -> np.ndarray:
        return self.signals[:, 1]


def record_size(n_epochs: int) -> int:
    return HEADER_SIZE + n_epochs + n_epochs * CHANNELS * EPOCH_SAMPLES * 4


def encode(rec: Recording) -> bytes:
    header = HEADER.pack(MAGIC, VERSION, rec.n_epochs, CHANNELS, EPOCH_SAMPLES, SAMPLE_RATE, rec.domain_id)
    return header + rec.labels.tobytes() + rec.signals.astype("<f4").tobytes()


def write_container(path: str | Path, recordings: Recording | Iterable[Recording]) -> Path:
    if isinstance(recordings, Recording):
        recordings = [recordings]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        for rec in recordings:
            fh.write(encode(rec))
    return path


def decode(buf: bytes | memoryview, offset: int = 0) -> tuple[Recording, int]:
    """Parse one record at ``offset``; returns it and the offset just past it."""
    if len(buf) - offset < HEADER_SIZE:
        if bytes(buf[offset:offset + 4]) not in (MAGIC[: len(buf) - offset], b""):
            raise BadMagicError(f"bad magic at byte {offset}")
        raise TruncatedError(f"truncated header at byte {offset}")
    magic, version, n, channels, spe, rate, domain = HEADER.unpack_from(buf, offset)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r} at byte {offset}")
    if version != VERSION:
        raise BadVersionError(f"unsupported version {version}")
    if channels != CHANNELS or spe != EPOCH_SAMPLES or rate != SAMPLE_RATE:
        raise BadHeaderError(f"unsupported layout: {channels} ch, {spe} samples, {rate} Hz")
    end = offset + record_size(n)
    if len(buf) < end:
        raise TruncatedError(f"record at byte {offset} needs {end - offset} bytes, {len(buf) - offset} present")
    pos = offset + HEADER_SIZE
    labels = np.frombuffer(buf, dtype=np.uint8, count=n, offset=pos).copy()
    pos += n
    signals = np.frombuffer(buf, dtype="<f4", count=n * channels * spe, offset=pos)
    signals = signals.reshape(n, channels, spe).astype(np.float32)
    return Recording(signals, labels, domain), end


def read_container(path: str | Path) -> list[Recording]:
    buf = Path(path).read_bytes()
    out, offset = [], 0
    if not buf:
        raise TruncatedError(f"{path}: empty file")
    while offset < len(buf):
        rec, offset = decode(buf, offset)
        out.append(rec)
    return out
