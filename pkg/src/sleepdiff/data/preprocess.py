"""Band-pass, rational resampling and z-scoring of raw channels."""

from __future__ import annotations

from fractions import Fraction

import numpy as np
from scipy import signal

from ..config import EPOCH_SAMPLES, SAMPLE_RATE

BAND = (0.3, 35.0)
FILTER_ORDER = 4
ZSCORE_FLOOR = 1e-8


def bandpass(x: np.ndarray, fs: float, low: float = BAND[0], high: float = BAND[1],
             order: int = FILTER_ORDER) -> np.ndarray:
    """Zero-phase Butterworth band-pass (forward-backward) along the last axis."""
    if fs <= 2 * high:
        raise ValueError(f"sampling rate {fs} Hz too low for a {high} Hz band edge")
    sos = signal.butter(order, [low, high], btype="bandpass", fs=fs, output="sos")
    return signal.sosfiltfilt(sos, np.asarray(x, dtype=np.float64), axis=-1)


def rate_ratio(fs_in: float, fs_out: float, max_denominator: int = 1000) -> Fraction:
    """fs_out / fs_in as an exact small fraction, or ValueError."""
    ratio = Fraction(fs_out).limit_denominator(10 ** 6) / Fraction(fs_in).limit_denominator(10 ** 6)
    approx = ratio.limit_denominator(max_denominator)
    if approx.numerator > max_denominator or abs(float(approx) - fs_out / fs_in) > 1e-12:
        raise ValueError(f"resampling ratio {fs_out}/{fs_in} is not a small rational")
    return approx


def resample(x: np.ndarray, fs_in: float, fs_out: float = SAMPLE_RATE) -> np.ndarray:
    """Polyphase (upsample, windowed-sinc low-pass, downsample) resampling.

    Output length is round(len * fs_out / fs_in). Equal rates pass through untouched.
    """
    if fs_in == fs_out:
        return x
    ratio = rate_ratio(fs_in, fs_out)
    n_in = x.shape[-1]
    y = signal.resample_poly(x, ratio.numerator, ratio.denominator, axis=-1)
    n_out = int(round(n_in * fs_out / fs_in))
    if y.shape[-1] < n_out:
        pad = [(0, 0)] * (y.ndim - 1) + [(0, n_out - y.shape[-1])]
        y = np.pad(y, pad, mode="edge")
    return y[..., :n_out]


def zscore(x: np.ndarray) -> np.ndarray:
    """Per-channel standardisation over the last axis with a std floor."""
    x = np.asarray(x, dtype=np.float64)
    mu = x.mean(axis=-1, keepdims=True)
    sd = x.std(axis=-1, keepdims=True)
    return (x - mu) / np.maximum(sd, ZSCORE_FLOOR)


def epoch(x: np.ndarray, samples: int = EPOCH_SAMPLES) -> np.ndarray:
    """(C, T) -> (n_epochs, C, samples); a trailing partial epoch is dropped."""
    n = x.shape[-1] // samples
    return x[:, : n * samples].reshape(x.shape[0], n, samples).transpose(1, 0, 2)


def preprocess_recording(raw: np.ndarray, fs: float) -> np.ndarray:
    """(C, T) at native rate -> (n_epochs, C, 3000) float32.

    Order is fixed: band-pass, resample to 100 Hz, z-score, epoch.
    """
    x = bandpass(raw, fs)
    x = resample(x, fs, SAMPLE_RATE)
    x = zscore(x)
    return epoch(x).astype(np.float32)
