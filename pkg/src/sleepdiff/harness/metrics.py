"""Confusion matrix, accuracy and macro-F1."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..config import N_CLASSES, STAGES

log = logging.getLogger(__name__)


@dataclass
class MetricsReport:
    """Percent-valued metrics; ``confusion[i, j]`` counts true class i predicted as j."""

    accuracy: float
    macro_f1: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    confusion: np.ndarray
    absent: tuple[int, ...] = field(default_factory=tuple)

    @property
    def support(self) -> np.ndarray:
        return self.confusion.sum(axis=1)

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            **{f"f1_{s}": float(v) for s, v in zip(STAGES, self.f1)},
        }

    def __str__(self) -> str:
        per = " ".join(f"{s}={v:.1f}" for s, v in zip(STAGES, self.f1))
        note = f" (absent: {', '.join(STAGES[i] for i in self.absent)})" if self.absent else ""
        return f"ACC {self.accuracy:.2f}  MF1 {self.macro_f1:.2f}  F1[{per}]{note}"


def confusion_matrix(y_true, y_pred, n_classes: int = N_CLASSES) -> np.ndarray:
    y_true = np.asarray(y_true).ravel()
    y_pred = np.asarray(y_pred).ravel()
    if y_true.shape != y_pred.shape:
        raise ValueError("y_true and y_pred differ in length")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def _safe_div(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.divide(a, b, out=np.zeros_like(a, dtype=np.float64), where=b > 0)


def report_from_confusion(cm: np.ndarray) -> MetricsReport:
    """Metrics from a confusion matrix. Classes with no true samples get F1 = 0 and are flagged."""
    cm = np.asarray(cm)
    total = cm.sum()
    if total == 0:
        raise ValueError("empty confusion matrix")
    tp = np.diag(cm).astype(np.float64)
    pred_pos = cm.sum(axis=0).astype(np.float64)
    support = cm.sum(axis=1).astype(np.float64)
    precision = _safe_div(tp, pred_pos)
    recall = _safe_div(tp, support)
    f1 = _safe_div(2 * tp, pred_pos + support)
    absent = tuple(int(i) for i in np.flatnonzero(support == 0))
    f1[list(absent)] = 0.0
    if absent:
        log.warning("classes absent from ground truth: %s", ", ".join(STAGES[i] for i in absent if i < len(STAGES)))
    return MetricsReport(
        accuracy=100.0 * tp.sum() / total,
        macro_f1=100.0 * f1.mean(),
        precision=100.0 * precision,
        recall=100.0 * recall,
        f1=100.0 * f1,
        confusion=cm,
        absent=absent,
    )


def compute_metrics(y_true, y_pred, n_classes: int = N_CLASSES) -> MetricsReport:
    return report_from_confusion(confusion_matrix(y_true, y_pred, n_classes))


def average_rows(rows: Sequence[Sequence[float]]) -> list[float]:
    """Column-wise arithmetic mean of a results table."""
    return list(np.mean(np.asarray(rows, dtype=np.float64), axis=0))
