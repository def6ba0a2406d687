"""Preprocessing, the SLPD container, sequence assembly and the synthetic generator."""

from .container import (
    BadHeaderError, BadMagicError, BadVersionError, ContainerError, Recording,
    TruncatedError, decode, encode, read_container, write_container,
)
from .preprocess import bandpass, epoch, preprocess_recording, resample, zscore
from .sequences import N_SEQ, SequenceSet, assemble_sequences, concat_sets, sequences_from_recordings
from .synth import DomainSpec, default_domains, generate_domains, synth_domain

__all__ = [
    "BadHeaderError", "BadMagicError", "BadVersionError", "ContainerError", "DomainSpec",
    "N_SEQ", "Recording", "SequenceSet", "TruncatedError", "assemble_sequences", "bandpass",
    "concat_sets", "decode", "default_domains", "encode", "epoch", "generate_domains",
    "preprocess_recording", "read_container", "resample", "sequences_from_recordings",
    "synth_domain", "write_container", "zscore",
]
