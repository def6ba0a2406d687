"""Experiment configuration and its key-value text form."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

N_CLASSES = 5
STAGES = ("W", "N1", "N2", "N3", "REM")
MODALITIES = ("eeg", "eog")
EPOCH_SAMPLES = 3000
SAMPLE_RATE = 100


@dataclass(frozen=True)
class AblationFlags:
    """Component switches; True means the component is present.

    da: differential attention inside MDTA (off -> standard multi-head attention)
    se: convolutional signal embedding (off -> 150-sample patches)
    ca: cross-modal attention between global tokens
    fa: feature-alignment losses
    id: standard MHSA at sequence level (off -> differential attention)
    """

    da: bool = True
    se: bool = True
    ca: bool = True
    fa: bool = True
    id: bool = True

    @classmethod
    def table_rows(cls) -> list[tuple[str, "AblationFlags"]]:
        """The six flag patterns of the ablation table, full model last."""
        return [
            ("no-DA", cls(da=False)),
            ("no-SE", cls(se=False)),
            ("no-CA", cls(ca=False)),
            ("no-FA", cls(fa=False)),
            ("no-ID", cls(id=False)),
            ("full", cls()),
        ]


@dataclass
class ExperimentConfig:
    sources: tuple[int, ...] = (1, 2, 3, 4)
    target: int = 0
    epochs: int = 50
    batch: int = 16
    lr: float = 5e-4
    dropout: float = 0.1
    lambda_rec: float = 0.5
    lambda_align: float = 0.5
    n_seq: int = 20
    d: int = 128
    n_layers: int = 4
    mdta_heads: int = 4
    seq_heads: int = 8
    seed: int = 0
    flags: AblationFlags = field(default_factory=AblationFlags)
    dtype: str = "float32"
    lambda_std: float = 0.1

    def __post_init__(self) -> None:
        self.sources = tuple(int(s) for s in self.sources)
        if self.target in self.sources:
            raise ValueError(f"target domain {self.target} is also a source")
        if self.sources and self.batch % len(self.sources):
            raise ValueError(f"batch {self.batch} not divisible by {len(self.sources)} source domains")
        if self.d % (2 * self.mdta_heads):
            raise ValueError(f"d={self.d} not divisible by 2*mdta_heads={2 * self.mdta_heads}")
        if (2 * self.d) % self.seq_heads:
            raise ValueError(f"2d={2 * self.d} not divisible by seq_heads={self.seq_heads}")
        if self.d % 4:
            raise ValueError("d must be divisible by 4")

    @property
    def np_dtype(self):
        return np.dtype(self.dtype).type

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    # -- key-value text ---------------------------------------------------
    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if f.name == "flags":
                for flag in dataclasses.fields(AblationFlags):
                    lines.append(f"flag.{flag.name} = {int(getattr(value, flag.name))}")
            elif f.name == "sources":
                lines.append(f"sources = {','.join(str(s) for s in value)}")
            else:
                lines.append(f"{f.name} = {value!r}" if isinstance(value, float) else f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        return cls.from_mapping(parse_kv(text))

    @classmethod
    def from_mapping(cls, kv: dict[str, str]) -> "ExperimentConfig":
        kwargs: dict = {}
        flags: dict[str, bool] = {}
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        for key, raw in kv.items():
            if key.startswith("flag."):
                flags[key[5:]] = raw.strip().lower() in ("1", "true", "on", "yes")
            elif key == "sources":
                kwargs["sources"] = tuple(int(s) for s in raw.split(",") if s.strip())
            elif key in types:
                kind = types[key]
                if kind in ("int", int):
                    kwargs[key] = int(raw)
                elif kind in ("float", float):
                    kwargs[key] = float(raw)
                else:
                    kwargs[key] = raw.strip()
            else:
                raise KeyError(f"unknown config key {key!r}")
        if flags:
            kwargs["flags"] = AblationFlags(**flags)
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text())


def parse_kv(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out
