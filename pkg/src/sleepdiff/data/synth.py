"""Synthetic multi-domain EEG/EOG recordings with stage-specific waveforms.

Signals are built at each domain's native rate, distorted by that domain's
acquisition profile, then passed through the normal preprocessing chain.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..config import EPOCH_SAMPLES, SAMPLE_RATE, parse_kv
from ..numerics import RngTree
from .container import Recording, write_container
from .preprocess import preprocess_recording

EPOCH_SECONDS = 30
NATIVE_RATES = (100, 125, 200, 256)

# Row-stochastic stage transitions (W, N1, N2, N3, REM); long self-dwell.
TRANSITIONS = np.array([
    [0.86, 0.09, 0.03, 0.00, 0.02],
    [0.08, 0.55, 0.30, 0.00, 0.07],
    [0.03, 0.04, 0.85, 0.06, 0.02],
    [0.02, 0.00, 0.10, 0.88, 0.00],
    [0.05, 0.05, 0.05, 0.00, 0.85],
])


@dataclass(frozen=True)
class DomainSpec:
    domain_id: int
    gain: float = 1.0
    noise_std: float = 0.5
    polarity: int = 1
    spectral_tilt: float = 0.0
    reference_offset: float = 0.0
    native_rate: int = 100

    def __post_init__(self) -> None:
        if self.gain <= 0:
            raise ValueError("gain must be positive")
        if self.polarity not in (-1, 1):
            raise ValueError("polarity must be +1 or -1")
        if self.native_rate not in NATIVE_RATES:
            raise ValueError(f"native_rate must be one of {NATIVE_RATES}")


def default_domains() -> list[DomainSpec]:
    """Five acquisition profiles with distinct gain, noise, polarity, tilt and rate."""
    return [
        DomainSpec(0, gain=1.0, noise_std=0.4, polarity=1, spectral_tilt=0.0, reference_offset=0.0, native_rate=100),
        DomainSpec(1, gain=2.5, noise_std=0.6, polarity=-1, spectral_tilt=-0.2, reference_offset=4.0, native_rate=256),
        DomainSpec(2, gain=0.6, noise_std=0.5, polarity=1, spectral_tilt=0.2, reference_offset=-3.0, native_rate=200),
        DomainSpec(3, gain=1.8, noise_std=0.7, polarity=-1, spectral_tilt=0.1, reference_offset=2.0, native_rate=125),
        DomainSpec(4, gain=0.8, noise_std=0.5, polarity=1, spectral_tilt=-0.1, reference_offset=0.0, native_rate=200),
    ]


@dataclass
class GeneratorConfig:
    """Key-value file form::

        seed = 0
        n_recordings = 40
        n_epochs = 20
        domain.1.gain = 2.5
        domain.1.native_rate = 256

    Domains not mentioned keep their default profile; listing a new id adds one.
    """

    specs: list[DomainSpec] = field(default_factory=default_domains)
    n_recordings: int = 40
    n_epochs: int = 20
    seed: int = 0

    @classmethod
    def from_text(cls, text: str) -> "GeneratorConfig":
        kv = parse_kv(text)
        out = cls()
        specs = {s.domain_id: dataclasses.asdict(s) for s in out.specs}
        types = {f.name: f.type for f in dataclasses.fields(DomainSpec)}
        for key, raw in kv.items():
            if key in ("seed", "n_recordings", "n_epochs"):
                setattr(out, key, int(raw))
            elif key.startswith("domain."):
                _, did, name = key.split(".", 2)
                if name not in types or name == "domain_id":
                    raise KeyError(f"unknown domain field {name!r}")
                spec = specs.setdefault(int(did), {"domain_id": int(did)})
                spec[name] = int(raw) if types[name] in ("int", int) else float(raw)
            else:
                raise KeyError(f"unknown generator key {key!r}")
        out.specs = [DomainSpec(**specs[d]) for d in sorted(specs)]
        return out

    def to_text(self) -> str:
        lines = [f"seed = {self.seed}", f"n_recordings = {self.n_recordings}", f"n_epochs = {self.n_epochs}"]
        for s in self.specs:
            for k, v in dataclasses.asdict(s).items():
                if k != "domain_id":
                    lines.append(f"domain.{s.domain_id}.{k} = {v}")
        return "\n".join(lines) + "\n"


def stationary_distribution(P: np.ndarray = TRANSITIONS) -> np.ndarray:
    w, v = np.linalg.eig(P.T)
    pi = np.real(v[:, np.argmin(np.abs(w - 1))])
    return pi / pi.sum()


def stage_sequence(n: int, rng: np.random.Generator, P: np.ndarray = TRANSITIONS) -> np.ndarray:
    states = np.empty(n, dtype=np.uint8)
    s = rng.choice(len(P), p=stationary_distribution(P))
    for i in range(n):
        states[i] = s
        s = rng.choice(len(P), p=P[s])
    return states


def pink_noise(n: int, fs: float, rng: np.random.Generator) -> np.ndarray:
    """Unit-variance 1/f noise."""
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1.0 / fs)
    spec[1:] /= np.sqrt(f[1:])
    spec[0] = 0.0
    x = np.fft.irfft(spec, n)
    return x / (x.std() + 1e-12)


def _bursts(t: np.ndarray, rng, n_range, dur_range, f_range, amp) -> np.ndarray:
    out = np.zeros_like(t)
    for _ in range(rng.integers(*n_range)):
        c = rng.uniform(1.0, EPOCH_SECONDS - 1.0)
        dur = rng.uniform(*dur_range)
        f = rng.uniform(*f_range)
        env = np.exp(-0.5 * ((t - c) / (dur / 4)) ** 2)
        out += amp * env * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    return out


def _tones(t: np.ndarray, rng, n: int, f_range, amp) -> np.ndarray:
    out = np.zeros_like(t)
    for _ in range(n):
        out += amp * np.sin(2 * np.pi * rng.uniform(*f_range) * t + rng.uniform(0, 2 * np.pi))
    return out / np.sqrt(n)


def _k_complex(t: np.ndarray, c: float, amp: float) -> np.ndarray:
    # sharp negative deflection followed by a slower positive one
    return amp * (-np.exp(-0.5 * ((t - c) / 0.12) ** 2) + 0.6 * np.exp(-0.5 * ((t - c - 0.45) / 0.25) ** 2))


def _saccades(t: np.ndarray, rng, n_range, amp) -> np.ndarray:
    out = np.zeros_like(t)
    for _ in range(rng.integers(*n_range)):
        c = rng.uniform(0.5, EPOCH_SECONDS - 0.5)
        width = rng.uniform(0.08, 0.2)
        out += amp * rng.choice([-1.0, 1.0]) * np.exp(-0.5 * ((t - c) / width) ** 2)
    return out


def stage_epoch(stage: int, fs: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """(eeg, eog) stage signature for one 30-s epoch at rate ``fs``."""
    t = np.arange(int(EPOCH_SECONDS * fs)) / fs
    if stage == 0:    # W: beta bursts, blinks
        eeg = _bursts(t, rng, (6, 10), (1.0, 3.0), (18.0, 25.0), 2.0) + _tones(t, rng, 3, (18.0, 25.0), 0.6)
        eog = _saccades(t, rng, (2, 5), 2.5)
    elif stage == 1:  # N1: theta, slow rolling eye movements
        eeg = _tones(t, rng, 4, (4.0, 7.0), 2.5)
        eog = 4.0 * np.sin(2 * np.pi * rng.uniform(0.3, 0.5) * t + rng.uniform(0, 2 * np.pi))
    elif stage == 2:  # N2: spindles and K-complexes over a low background
        eeg = _tones(t, rng, 3, (4.0, 7.0), 0.7) + _bursts(t, rng, (2, 5), (0.8, 1.6), (12.0, 16.0), 3.5)
        for _ in range(rng.integers(1, 3)):
            eeg = eeg + _k_complex(t, rng.uniform(2.0, EPOCH_SECONDS - 2.0), 8.0)
        eog = 0.3 * _tones(t, rng, 2, (0.5, 2.0), 1.0)
    elif stage == 3:  # N3: high-amplitude delta
        eeg = _tones(t, rng, 3, (0.5, 2.0), 9.0)
        eog = _tones(t, rng, 2, (0.5, 2.0), 2.0)
    elif stage == 4:  # REM: low mixed EEG with sawtooth waves, rapid eye movements
        saw = 2.0 * ((t * rng.uniform(2.0, 3.0)) % 1.0 - 0.5)
        eeg = _tones(t, rng, 3, (4.0, 7.0), 0.8) + saw * 1.2
        eog = _saccades(t, rng, (10, 18), 5.0)
    else:
        raise ValueError(f"unknown stage {stage}")
    return eeg, eog


def tilt_spectrum(x: np.ndarray, fs: float, tilt: float, f_ref: float = 10.0) -> np.ndarray:
    """Scale each frequency component by (f / f_ref) ** tilt (floored at 0.3 Hz)."""
    if tilt == 0.0:
        return x
    n = x.shape[-1]
    f = np.fft.rfftfreq(n, 1.0 / fs)
    w = (np.maximum(f, 0.3) / f_ref) ** tilt
    return np.fft.irfft(np.fft.rfft(x, axis=-1) * w, n, axis=-1)


def synth_raw(spec: DomainSpec, n_epochs: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Native-rate (2, T) signal and per-epoch labels, after the domain's distortion.

    Random draws do not depend on the spec's gain, polarity, tilt or offset.
    """
    fs = spec.native_rate
    labels = stage_sequence(n_epochs, rng)
    parts = [stage_epoch(int(s), fs, rng) for s in labels]
    eeg = np.concatenate([p[0] for p in parts])
    eog = np.concatenate([p[1] for p in parts])
    x = np.stack([eeg, eog])
    x = x + spec.noise_std * np.stack([pink_noise(x.shape[1], fs, rng) for _ in range(2)])
    x = tilt_spectrum(x, fs, spec.spectral_tilt)
    x = spec.gain * spec.polarity * x + spec.reference_offset
    return x, labels


def synth_domain(spec: DomainSpec, n_recordings: int, seed: int, n_epochs: int = 20) -> list[Recording]:
    """Generate and preprocess ``n_recordings`` recordings of ``n_epochs`` epochs each."""
    tree = RngTree(seed).child(f"domain{spec.domain_id}")
    out = []
    for r in range(n_recordings):
        raw, labels = synth_raw(spec, n_epochs, tree.child(f"rec{r}").generator())
        signals = preprocess_recording(raw, spec.native_rate)
        assert signals.shape == (n_epochs, 2, EPOCH_SAMPLES)
        out.append(Recording(signals, labels, spec.domain_id))
    return out


def generate_domains(out_dir: str | Path, specs: list[DomainSpec] | None = None, n_recordings: int = 40,
                     n_epochs: int = 20, seed: int = 0) -> dict[int, Path]:
    """Write one SLPD file per domain; returns {domain_id: path}."""
    specs = default_domains() if specs is None else specs
    out_dir = Path(out_dir)
    paths = {}
    for spec in specs:
        recs = synth_domain(spec, n_recordings, seed, n_epochs)
        paths[spec.domain_id] = write_container(out_dir / domain_filename(spec.domain_id), recs)
    return paths


def domain_filename(domain_id: int) -> str:
    return f"domain_{domain_id}.slpd"


# -- band-power baseline ------------------------------------------------------

EEG_BANDS = ((0.5, 4.0), (4.0, 8.0), (8.0, 12.0), (12.0, 16.0), (16.0, 30.0))
EOG_BANDS = ((0.3, 2.0), (2.0, 8.0), (8.0, 30.0))


def band_power(x: np.ndarray, fs: float, band: tuple[float, float]) -> np.ndarray:
    """Mean periodogram power inside ``band`` along the last axis."""
    n = x.shape[-1]
    f = np.fft.rfftfreq(n, 1.0 / fs)
    p = np.abs(np.fft.rfft(x, axis=-1)) ** 2 / n
    sel = (f >= band[0]) & (f < band[1])
    return p[..., sel].mean(axis=-1)


def band_power_features(signals: np.ndarray, fs: float = SAMPLE_RATE) -> np.ndarray:
    """(n, 2, T) epochs -> (n, 8) log band powers (five EEG bands, three EOG bands)."""
    eeg = [band_power(signals[:, 0], fs, b) for b in EEG_BANDS]
    eog = [band_power(signals[:, 1], fs, b) for b in EOG_BANDS]
    return np.log(np.stack(eeg + eog, axis=1) + 1e-12)


def nearest_centroid_accuracy(recordings: list[Recording]) -> float:
    """Fit class centroids on even-indexed recordings, score on odd ones."""
    train = [r for i, r in enumerate(recordings) if i % 2 == 0]
    test = [r for i, r in enumerate(recordings) if i % 2 == 1]
    xtr = band_power_features(np.concatenate([r.signals for r in train]))
    ytr = np.concatenate([r.labels for r in train])
    xte = band_power_features(np.concatenate([r.signals for r in test]))
    yte = np.concatenate([r.labels for r in test])
    mu, sd = xtr.mean(0), xtr.std(0) + 1e-12
    xtr, xte = (xtr - mu) / sd, (xte - mu) / sd
    classes = np.unique(ytr)
    cents = np.stack([xtr[ytr == c].mean(0) for c in classes])
    pred = classes[np.argmin(((xte[:, None, :] - cents[None]) ** 2).sum(-1), axis=1)]
    return float((pred == yte).mean())
