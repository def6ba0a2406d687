"""SDFM checkpoints: config text plus a named float32 tensor table.

Layout (little-endian)::

    magic    4 bytes  b"SDFM"
    version  u32      1
    config   u32 byte length, then UTF-8 key = value text
    count    u32
    per tensor: u16 name length, name (UTF-8), u8 ndim, ndim x u32 dims, f32 data

Adam moments are stored as ``optim.m.<param>`` and ``optim.v.<param>``; the
step counter travels in the config text as ``optim.t``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ..config import ExperimentConfig, parse_kv
from ..model import SleepDiffFormer
from ..numerics import Adam

MAGIC = b"SDFM"
VERSION = 1
OPTIM_KEYS = ("optim.t", "optim.lr")


class CheckpointError(Exception):
    code = 1


class CheckpointMagicError(CheckpointError):
    code = 2


class CheckpointVersionError(CheckpointError):
    code = 3


class CheckpointTruncatedError(CheckpointError):
    code = 4


class UnknownTensorError(CheckpointError):
    code = 5


class MissingTensorError(CheckpointError):
    code = 6


class TensorShapeError(CheckpointError):
    code = 7


@dataclass
class Checkpoint:
    config: ExperimentConfig
    tensors: dict[str, np.ndarray]
    optim_t: int = 0


def encode_tensors(tensors: dict[str, np.ndarray]) -> bytes:
    parts = [struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        arr = np.asarray(arr)
        parts.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def encode_checkpoint(config: ExperimentConfig, tensors: dict[str, np.ndarray], optim_t: int = 0) -> bytes:
    text = config.to_text() + f"optim.t = {optim_t}\n"
    blob = text.encode("utf-8")
    return MAGIC + struct.pack("<II", VERSION, len(blob)) + blob + encode_tensors(tensors)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointTruncatedError(f"truncated while reading {what} at byte {self.pos}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size, what))


def decode_checkpoint(buf: bytes) -> Checkpoint:
    r = _Reader(buf)
    magic = buf[:4]
    if len(buf) >= 4 and magic != MAGIC or 0 < len(buf) < 4 and magic != MAGIC[:len(buf)]:
        raise CheckpointMagicError(f"bad magic {bytes(magic)!r}")
    r.take(4, "magic")
    (version,) = r.unpack("<I", "version")
    if version != VERSION:
        raise CheckpointVersionError(f"unsupported checkpoint version {version}")
    (n_blob,) = r.unpack("<I", "config length")
    kv = parse_kv(r.take(n_blob, "config").decode("utf-8"))
    optim_t = int(kv.pop("optim.t", "0"))
    for key in OPTIM_KEYS:
        kv.pop(key, None)
    config = ExperimentConfig.from_mapping(kv)
    (count,) = r.unpack("<I", "tensor count")
    tensors: dict[str, np.ndarray] = {}
    for i in range(count):
        (n_name,) = r.unpack("<H", f"tensor {i} name length")
        name = r.take(n_name, f"tensor {i} name").decode("utf-8")
        (ndim,) = r.unpack("<B", f"{name} ndim")
        shape = r.unpack(f"<{ndim}I", f"{name} dims")
        n = int(np.prod(shape, dtype=np.int64))
        data = r.take(4 * n, f"{name} data")
        tensors[name] = np.frombuffer(data, dtype="<f4").reshape(shape).astype(np.float32)
    if r.pos != len(buf):
        raise CheckpointError(f"{len(buf) - r.pos} trailing bytes after tensor table")
    return Checkpoint(config, tensors, optim_t)


def model_tensors(model: SleepDiffFormer, optimizer: Optional[Adam] = None) -> dict[str, np.ndarray]:
    named = list(model.named_parameters())
    out = {name: p.data for name, p in named}
    if optimizer is not None and optimizer.state.m:
        index = {id(p): i for i, p in enumerate(optimizer.params)}
        for name, p in named:
            i = index[id(p)]
            out[f"optim.m.{name}"] = optimizer.state.m[i]
            out[f"optim.v.{name}"] = optimizer.state.v[i]
    return out


def save_checkpoint(model: SleepDiffFormer, optimizer: Optional[Adam], config: ExperimentConfig,
                    path: str | Path) -> Path:
    """Write model weights (and Adam state if given). Weights are stored as float32."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    t = optimizer.state.t if optimizer is not None else 0
    path.write_bytes(encode_checkpoint(config, model_tensors(model, optimizer), t))
    return path


def restore(ckpt: Checkpoint) -> tuple[SleepDiffFormer, Adam]:
    model = SleepDiffFormer(ckpt.config)
    params = dict(model.named_parameters())
    optimizer = Adam(model.parameters(), lr=ckpt.config.lr)
    order = {id(p): i for i, p in enumerate(optimizer.params)}
    m = [np.zeros_like(p.data) for p in optimizer.params]
    v = [np.zeros_like(p.data) for p in optimizer.params]
    seen = set()
    for name, arr in ckpt.tensors.items():
        kind, pname = "param", name
        for prefix in ("optim.m.", "optim.v."):
            if name.startswith(prefix):
                kind, pname = prefix, name[len(prefix):]
        if pname not in params:
            raise UnknownTensorError(f"checkpoint tensor {name!r} has no matching parameter")
        p = params[pname]
        if arr.shape != p.shape:
            raise TensorShapeError(f"{name}: stored {arr.shape}, model expects {p.shape}")
        if kind == "param":
            p.data[...] = arr
            seen.add(pname)
        else:
            (m if kind == "optim.m." else v)[order[id(p)]][...] = arr
    missing = sorted(set(params) - seen)
    if missing:
        raise MissingTensorError(f"checkpoint lacks {len(missing)} parameter(s), e.g. {missing[0]}")
    if ckpt.optim_t:
        optimizer.state.m, optimizer.state.v, optimizer.state.t = m, v, ckpt.optim_t
    return model, optimizer


def load_checkpoint(path: str | Path) -> tuple[SleepDiffFormer, Adam, ExperimentConfig]:
    ckpt = decode_checkpoint(Path(path).read_bytes())
    model, optimizer = restore(ckpt)
    return model, optimizer, ckpt.config
