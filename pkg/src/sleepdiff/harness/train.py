"""Training steps, the epoch loop, evaluation and the target-leakage guard."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional

import numpy as np

from ..config import ExperimentConfig
from ..data.container import read_container
from ..data.sequences import SequenceSet, sequences_from_recordings
from ..data.synth import domain_filename
from ..losses import LossBundle, alignment_losses, cls_loss, cov_loss, exp_loss, rec_loss, total_loss
from ..model import SleepDiffFormer
from ..numerics import Adam, GradTape, Tensor
from .batching import DomainBatch, epoch_batches
from .metrics import MetricsReport, compute_metrics

log = logging.getLogger(__name__)


class NonFiniteLossError(FloatingPointError):
    def __init__(self, bundle: LossBundle, batch_ids: list[tuple[int, int]], step: int):
        self.bundle, self.batch_ids, self.step = bundle, batch_ids, step
        parts = ", ".join(f"{k}={v:.6g}" for k, v in bundle.as_dict().items())
        super().__init__(f"non-finite loss at step {step}: {parts}; batch (domain, index) = {batch_ids}")


class LeakageError(RuntimeError):
    """Target-domain data requested while training."""


class DomainStore:
    """SLPD files in one directory, one per domain, with a target lock."""

    def __init__(self, root: str | Path, n_seq: int = 20):
        self.root = Path(root)
        self.n_seq = n_seq
        self.locked: set[int] = set()
        self.opened: list[int] = []

    def path(self, domain_id: int) -> Path:
        return self.root / domain_filename(domain_id)

    def check(self, domain_ids) -> None:
        missing = [d for d in domain_ids if not self.path(d).is_file()]
        if missing:
            raise FileNotFoundError(f"missing domain file(s): {', '.join(str(self.path(d)) for d in missing)}")

    def load(self, domain_id: int) -> SequenceSet:
        if domain_id in self.locked:
            raise LeakageError(f"domain {domain_id} is the held-out target and cannot be read during training")
        self.opened.append(domain_id)
        seqs = sequences_from_recordings(read_container(self.path(domain_id)), self.n_seq)
        seqs.domain_id = domain_id
        return seqs


@dataclass
class TrainResult:
    model: SleepDiffFormer
    optimizer: Adam
    history: list[dict] = field(default_factory=list)
    seconds: float = 0.0
    source_alignment: float = float("nan")


def _zero(dtype) -> Tensor:
    return Tensor(np.zeros((), dtype=dtype))


def compute_losses(model: SleepDiffFormer, batch: DomainBatch, config: ExperimentConfig) -> LossBundle:
    """Forward pass and every loss term; alignment only with FA on and >= 2 domains."""
    out = model(batch.x)
    cls, cls_epoch = cls_loss(out.logits, batch.y)
    rec = rec_loss(batch.x, out.recon)
    if config.flags.fa and len(np.unique(batch.domains)) >= 2:
        exp, cov, seq = alignment_losses(out.s_bar, batch.domains)
    else:
        exp = cov = seq = _zero(model.dtype)
    return total_loss(cls, rec, exp, cov, seq, config.lambda_rec, config.lambda_align, cls_epoch)


def train_step(model: SleepDiffFormer, batch: DomainBatch, config: ExperimentConfig,
               optimizer: Adam) -> LossBundle:
    model.train()
    optimizer.zero_grad()
    with GradTape() as tape:
        bundle = compute_losses(model, batch, config)
        if not np.isfinite(bundle.total):
            raise NonFiniteLossError(bundle, batch.ids(), optimizer.state.t + 1)
        tape.backward(bundle.total_tensor)
    optimizer.step()
    return bundle


def make_optimizer(model: SleepDiffFormer, config: ExperimentConfig) -> Adam:
    return Adam(model.parameters(), lr=config.lr)


def fit(config: ExperimentConfig, pools: Mapping[int, SequenceSet], model: Optional[SleepDiffFormer] = None,
        on_epoch: Optional[Callable[[int, dict], None]] = None) -> TrainResult:
    """Train for ``config.epochs`` passes over the source pools; the final model is kept."""
    if set(pools) != set(config.sources):
        raise ValueError(f"pools {sorted(pools)} do not match sources {list(config.sources)}")
    if config.target in pools:
        raise LeakageError("target domain present among training pools")
    model = SleepDiffFormer(config) if model is None else model
    optimizer = make_optimizer(model, config)
    order_rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(7,)))
    result = TrainResult(model, optimizer)
    t0 = time.perf_counter()
    for ep in range(config.epochs):
        rows = [train_step(model, b, config, optimizer).as_dict()
                for b in epoch_batches(pools, config.batch, order_rng)]
        summary = {k: float(np.mean([r[k] for r in rows])) for k in rows[0]}
        summary["epoch"] = ep + 1
        result.history.append(summary)
        log.info("epoch %d: %s", ep + 1, " ".join(f"{k}={v:.4f}" for k, v in summary.items() if k != "epoch"))
        if on_epoch is not None:
            on_epoch(ep + 1, summary)
    result.seconds = time.perf_counter() - t0
    return result


def predict_sequences(model: SleepDiffFormer, x: np.ndarray, batch: int = 16) -> np.ndarray:
    model.eval()
    try:
        return np.concatenate([model(x[i:i + batch]).logits.data.argmax(-1) for i in range(0, len(x), batch)])
    finally:
        model.train()


def evaluate(model: SleepDiffFormer, target: SequenceSet, batch: int = 16) -> MetricsReport:
    """Per-epoch argmax predictions over every target sequence, dropout off."""
    if len(target) == 0:
        raise ValueError("evaluate: target set holds no sequences")
    pred = predict_sequences(model, target.x, batch)
    return compute_metrics(target.y, pred)


def source_features(model: SleepDiffFormer, pools: Mapping[int, SequenceSet], batch: int = 16) -> dict[int, np.ndarray]:
    """Encoded series features (k, N, 2d) per source domain, dropout off."""
    model.eval()
    try:
        return {
            d: np.concatenate([model(p.x[i:i + batch]).s_bar.data for i in range(0, len(p), batch)])
            for d, p in pools.items()
        }
    finally:
        model.train()


def epoch_alignment(features: Mapping[int, np.ndarray]) -> float:
    """Mean plus covariance alignment term over whole source pools."""
    flat = [Tensor(f.reshape(-1, f.shape[-1]).astype(np.float64)) for _, f in sorted(features.items())]
    return float((exp_loss(flat) + cov_loss(flat)).data)


def run_experiment(config: ExperimentConfig, store: DomainStore,
                   on_epoch: Optional[Callable[[int, dict], None]] = None,
                   measure_alignment: bool = False) -> tuple[TrainResult, MetricsReport]:
    """Train on the sources, then (only then) read and score the target.

    With ``measure_alignment`` the final model's source-domain L_epo is stored
    on the result, whatever the FA flag.
    """
    store.check(list(config.sources) + [config.target])
    store.locked.add(config.target)
    try:
        pools = {d: store.load(d) for d in config.sources}
        result = fit(config, pools, on_epoch=on_epoch)
        if measure_alignment:
            result.source_alignment = epoch_alignment(source_features(result.model, pools))
    finally:
        store.locked.discard(config.target)
    report = evaluate(result.model, store.load(config.target))
    return result, report


__all__ = [
    "DomainStore", "LeakageError", "NonFiniteLossError", "TrainResult", "compute_losses",
    "epoch_alignment", "evaluate", "fit", "make_optimizer", "predict_sequences",
    "run_experiment", "source_features", "train_step",
]
