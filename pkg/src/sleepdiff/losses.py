"""Classification, reconstruction and cross-domain alignment losses."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import N_CLASSES
from .numerics import Tensor, ops
from .numerics.tensor import DimensionError

log = logging.getLogger(__name__)

PCC_EPS = 1e-12


@dataclass
class LossBundle:
    cls: float
    rec: float
    exp: float
    cov: float
    epo: float
    seq: float
    total: float
    lambda_rec: float = 0.5
    lambda_align: float = 0.5
    cls_per_epoch: float = float("nan")
    total_tensor: Tensor | None = None

    def as_dict(self) -> dict[str, float]:
        return {
            "cls": self.cls, "rec": self.rec, "exp": self.exp, "cov": self.cov,
            "epo": self.epo, "seq": self.seq, "total": self.total,
        }


def _scalar(x) -> float:
    return float(x.data) if isinstance(x, Tensor) else float(x)


def cls_loss(logits: Tensor, labels) -> tuple[Tensor, float]:
    """Cross-entropy summed over the epochs of each sequence, averaged over sequences.

    logits: (B, N, C); labels: (B, N) ints. Also returns the per-epoch mean.
    """
    labels = np.asarray(labels)
    if labels.shape != logits.shape[:-1]:
        raise DimensionError(f"labels {labels.shape} do not match logits {logits.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[-1]):
        raise ValueError(f"labels must lie in 0..{logits.shape[-1] - 1}")
    onehot = np.eye(logits.shape[-1], dtype=logits.dtype)[labels]
    nll = -(ops.log_softmax(logits) * onehot).sum(axis=-1)   # (B, N)
    per_seq = nll.sum(axis=-1)
    return per_seq.mean(), float(nll.data.mean())


def rec_loss(x, x_hat: Tensor) -> Tensor:
    """Mean squared error over every sample, channel, epoch and sequence."""
    x = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=x_hat.dtype))
    if x.shape != x_hat.shape:
        raise DimensionError(f"rec_loss: shapes {x.shape} and {x_hat.shape} differ")
    diff = x_hat - x
    return (diff * diff).mean()


def _pairwise_sq(stats: Sequence[Tensor]) -> Tensor:
    """sum over ordered pairs i != j of ||stats_i - stats_j||^2."""
    total = None
    for i, a in enumerate(stats):
        for j, b in enumerate(stats):
            if i == j:
                continue
            diff = a - b
            term = (diff * diff).sum()
            total = term if total is None else total + term
    return total


def exp_loss(features: Sequence[Tensor]) -> Tensor:
    """Squared L2 distance between domain feature means, over ordered domain pairs.

    features: one (n_i, D) tensor per domain.
    """
    if len(features) < 2:
        warnings.warn("exp_loss: fewer than two domains, alignment term is 0", RuntimeWarning)
        return Tensor(np.zeros((), dtype=features[0].dtype if features else np.float64))
    return _pairwise_sq([f.mean(axis=0) for f in features])


def covariance(f: Tensor) -> Tensor:
    """Unbiased (1/(n-1)) feature covariance of an (n, D) tensor; zeros when n < 2."""
    n, D = f.shape
    if n < 2:
        log.info("covariance: %d row(s), using a zero matrix", n)
        return Tensor(np.zeros((D, D), dtype=f.dtype))
    c = f - f.mean(axis=0, keepdims=True)
    return ops.matmul(ops.swapaxes(c, 0, 1), c) * (1.0 / (n - 1))


def cov_loss(features: Sequence[Tensor]) -> Tensor:
    """Squared Frobenius distance between domain covariances, over ordered pairs."""
    if len(features) < 2:
        warnings.warn("cov_loss: fewer than two domains, alignment term is 0", RuntimeWarning)
        return Tensor(np.zeros((), dtype=features[0].dtype if features else np.float64))
    return _pairwise_sq([covariance(f) for f in features])


def pcc_matrix(seq: Tensor) -> Tensor:
    """Pearson correlation between the epoch vectors of each sequence.

    seq: (..., N, D) -> (..., N, N). A zero-variance epoch vector gets
    correlation 0 with everything (its diagonal entry included).
    """
    c = seq - seq.mean(axis=-1, keepdims=True)
    ss = (c * c).sum(axis=-1, keepdims=True)
    flat = ss.data <= PCC_EPS
    if flat.any():
        log.info("pcc_matrix: %d zero-variance epoch vector(s) guarded", int(flat.sum()))
        c = c * (~flat).astype(seq.dtype)
        ss = ss + flat.astype(seq.dtype)
    z = c / ops.sqrt(ss)
    return ops.matmul(z, ops.swapaxes(z, -1, -2))


def domain_correlation(seqs: Tensor) -> Tensor:
    """Mean PCC matrix over a domain's sequences; seqs: (k, N, D) -> (N, N)."""
    return pcc_matrix(seqs).mean(axis=0)


def seq_align_loss(correlations: Sequence[Tensor]) -> Tensor:
    """Squared Frobenius distance between domain correlation matrices, ordered pairs."""
    if len(correlations) < 2:
        warnings.warn("seq_align_loss: fewer than two domains, alignment term is 0", RuntimeWarning)
        return Tensor(np.zeros((), dtype=correlations[0].dtype if correlations else np.float64))
    return _pairwise_sq(correlations)


def group_by_domain(features: Tensor, domains) -> list[Tensor]:
    """Split (B, ...) rows by domain id, in ascending id order."""
    domains = np.asarray(domains)
    return [features[np.flatnonzero(domains == d)] for d in np.unique(domains)]


def alignment_losses(s_bar: Tensor, domains) -> tuple[Tensor, Tensor, Tensor]:
    """(exp, cov, seq) alignment terms from encoded series features (B, N, D)."""
    per_domain = group_by_domain(s_bar, domains)
    D = s_bar.shape[-1]
    flat = [f.reshape(-1, D) for f in per_domain]
    corr = [domain_correlation(f) for f in per_domain]
    return exp_loss(flat), cov_loss(flat), seq_align_loss(corr)


def total_loss(cls, rec, exp=0.0, cov=0.0, seq=0.0, lambda_rec: float = 0.5,
               lambda_align: float = 0.5, cls_per_epoch: float = float("nan")) -> LossBundle:
    """cls + lambda_rec * rec + lambda_align * ((exp + cov) + seq)."""
    epo = exp + cov
    total = cls + lambda_rec * rec + lambda_align * (epo + seq)
    return LossBundle(
        cls=_scalar(cls), rec=_scalar(rec), exp=_scalar(exp), cov=_scalar(cov),
        epo=_scalar(epo), seq=_scalar(seq), total=_scalar(total),
        lambda_rec=lambda_rec, lambda_align=lambda_align, cls_per_epoch=cls_per_epoch,
        total_tensor=total if isinstance(total, Tensor) else None,
    )


__all__ = [
    "LossBundle", "N_CLASSES", "alignment_losses", "cls_loss", "cov_loss", "covariance",
    "domain_correlation", "exp_loss", "group_by_domain", "pcc_matrix", "rec_loss",
    "seq_align_loss", "total_loss",
]
