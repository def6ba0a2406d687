"""Leave-one-domain-out protocol and the ablation sweep."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..config import AblationFlags, ExperimentConfig
from .metrics import MetricsReport, average_rows
from .train import DomainStore, run_experiment

log = logging.getLogger(__name__)

FLAG_COLUMNS = ("da", "se", "ca", "fa", "id")


@dataclass
class FoldResult:
    target: int
    seed: int
    report: MetricsReport
    source_alignment: float
    seconds: float


@dataclass
class LoocvSummary:
    folds: list[FoldResult] = field(default_factory=list)

    def rows(self) -> list[tuple[int, float, float]]:
        """(target, accuracy, macro-F1) per held-out domain, averaged over seeds."""
        out = []
        for t in sorted({f.target for f in self.folds}):
            fs = [f for f in self.folds if f.target == t]
            out.append((t, float(np.mean([f.report.accuracy for f in fs])),
                        float(np.mean([f.report.macro_f1 for f in fs]))))
        return out

    def average(self) -> tuple[float, float]:
        acc, mf1 = average_rows([(a, m) for _, a, m in self.rows()])
        return float(acc), float(mf1)

    def table(self) -> str:
        lines = [f"{'target':>8} {'ACC':>7} {'MF1':>7}"]
        lines += [f"{t:>8} {a:7.2f} {m:7.2f}" for t, a, m in self.rows()]
        acc, mf1 = self.average()
        lines.append(f"{'average':>8} {acc:7.2f} {mf1:7.2f}")
        return "\n".join(lines)

    def write_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["target", "accuracy", "macro_f1"])
            for t, a, m in self.rows():
                w.writerow([t, f"{a:.4f}", f"{m:.4f}"])
            acc, mf1 = self.average()
            w.writerow(["average", f"{acc:.4f}", f"{mf1:.4f}"])
        return path


def fold_config(base: ExperimentConfig, target: int, domains: Sequence[int], seed: int) -> ExperimentConfig:
    return base.replace(target=target, sources=tuple(d for d in domains if d != target), seed=seed)


def run_loocv(base: ExperimentConfig, store: DomainStore, domains: Sequence[int] = (0, 1, 2, 3, 4),
              seeds: Sequence[int] = (0,), targets: Optional[Sequence[int]] = None,
              out_dir: str | Path | None = None, measure_alignment: bool = False,
              echo=print) -> LoocvSummary:
    """Hold out each target in turn, train on the rest, score on the target."""
    store.check(domains)
    targets = list(domains) if targets is None else list(targets)
    summary = LoocvSummary()
    for target in targets:
        for seed in seeds:
            cfg = fold_config(base, target, domains, seed)
            result, report = run_experiment(cfg, store, measure_alignment=measure_alignment)
            summary.folds.append(FoldResult(target, seed, report, result.source_alignment, result.seconds))
            if echo:
                echo(f"target {target} seed {seed}: {report} ({result.seconds:.0f}s)")
    if echo:
        echo(summary.table())
    if out_dir is not None:
        summary.write_csv(Path(out_dir) / "loocv_summary.csv")
    return summary


def run_ablation(base: ExperimentConfig, store: DomainStore, domains: Sequence[int] = (0, 1, 2, 3, 4),
                 seeds: Sequence[int] = (0,), out_dir: str | Path | None = None,
                 echo=print) -> list[tuple[str, AblationFlags, LoocvSummary]]:
    """One full leave-one-out run per ablation row; summary CSV has one row per flag pattern."""
    store.check(domains)
    results = []
    for name, flags in AblationFlags.table_rows():
        if echo:
            echo(f"== {name}")
        sub = None if out_dir is None else Path(out_dir) / name
        summary = run_loocv(base.replace(flags=flags), store, domains, seeds, out_dir=sub, echo=echo)
        results.append((name, flags, summary))
    if echo:
        echo(ablation_table(results))
    if out_dir is not None:
        write_ablation_csv(results, Path(out_dir) / "ablation_summary.csv")
    return results


def ablation_table(results) -> str:
    head = " ".join(f"{c.upper():>3}" for c in FLAG_COLUMNS)
    lines = [f"{'row':<6} {head} {'ACC':>7} {'MF1':>7}"]
    for name, flags, summary in results:
        marks = " ".join(f"{'on' if getattr(flags, c) else 'off':>3}" for c in FLAG_COLUMNS)
        acc, mf1 = summary.average()
        lines.append(f"{name:<6} {marks} {acc:7.2f} {mf1:7.2f}")
    return "\n".join(lines)


def write_ablation_csv(results, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", *FLAG_COLUMNS, "accuracy", "macro_f1"])
        for name, flags, summary in results:
            acc, mf1 = summary.average()
            w.writerow([name, *(int(getattr(flags, c)) for c in FLAG_COLUMNS), f"{acc:.4f}", f"{mf1:.4f}"])
    return path
