"""Confusion matrices and per-class / macro precision, recall, F-score."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


class MetricWarning(UserWarning):
    pass


@dataclass(eq=False)
class ConfusionMatrix:
    """counts[i, j] = samples of true class i predicted as class j."""

    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise ValueError(f"confusion matrix must be square, got {self.counts.shape}")
        if np.any(self.counts < 0):
            raise ValueError("confusion matrix counts must be non-negative")
        self.counts = self.counts.astype(np.int64)

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion(y_true, y_pred, n_classes: int) -> ConfusionMatrix:
    y_true = np.asarray(y_true, dtype=np.int64).reshape(-1)
    y_pred = np.asarray(y_pred, dtype=np.int64).reshape(-1)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"label length mismatch: {y_true.shape} vs {y_pred.shape}")
    if n_classes < 1:
        raise ValueError(f"n_classes must be >= 1, got {n_classes}")
    for name, arr in (("true", y_true), ("predicted", y_pred)):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise ValueError(f"{name} labels outside [0, {n_classes})")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (y_true, y_pred), 1)
    return ConfusionMatrix(counts)


@dataclass(eq=False)
class MetricReport:
    """Per-class vectors plus unweighted macro averages.

    zero_division_classes lists classes where an empty denominator forced a
    0.0 (class never present and/or never predicted).
    """

    precision: np.ndarray
    recall: np.ndarray
    f_score: np.ndarray
    macro_precision: float
    macro_recall: float
    macro_f: float
    zero_division_classes: tuple[int, ...] = ()


def metrics(cm: ConfusionMatrix) -> MetricReport:
    """Precision, recall and F per class; 0/0 is defined as 0 with a warning."""
    counts = cm.counts.astype(float)
    if counts.sum() == 0:
        raise ValueError("confusion matrix is all zero")
    tp = np.diag(counts)
    pred_totals = counts.sum(axis=0)
    true_totals = counts.sum(axis=1)

    degenerate: list[int] = []
    n = cm.n_classes
    precision = np.zeros(n)
    recall = np.zeros(n)
    f_score = np.zeros(n)
    for c in range(n):
        hit_zero = False
        if pred_totals[c] > 0:
            precision[c] = tp[c] / pred_totals[c]
        else:
            hit_zero = True
        if true_totals[c] > 0:
            recall[c] = tp[c] / true_totals[c]
        else:
            hit_zero = True
        denom = precision[c] + recall[c]
        if denom > 0:
            f_score[c] = 2.0 * precision[c] * recall[c] / denom
        else:
            hit_zero = True
        if hit_zero:
            degenerate.append(c)
    if degenerate:
        warnings.warn(
            f"0/0 in metrics for classes {degenerate}, reported as 0.0", MetricWarning
        )
    return MetricReport(
        precision=precision,
        recall=recall,
        f_score=f_score,
        macro_precision=float(precision.mean()),
        macro_recall=float(recall.mean()),
        macro_f=float(f_score.mean()),
        zero_division_classes=tuple(degenerate),
    )


def accuracy(cm: ConfusionMatrix) -> float:
    """Micro accuracy: trace over total count."""
    total = cm.total
    if total == 0:
        raise ValueError("confusion matrix is all zero")
    return float(np.trace(cm.counts) / total)


def aggregate(reports: list[MetricReport]) -> tuple[MetricReport, MetricReport]:
    """Elementwise mean and population std across reports of equal class count.

    The std record reuses the MetricReport shape; its macro fields are the
    spread of the macro values, not macro averages of the per-class spreads.
    """
    if not reports:
        raise ValueError("no reports to aggregate")
    n = len(reports[0].precision)
    for r in reports:
        if len(r.precision) != n:
            raise ValueError("reports disagree on class count")

    def stack(attr):
        return np.stack([np.asarray(getattr(r, attr), dtype=float) for r in reports])

    def scalars(attr):
        return np.array([getattr(r, attr) for r in reports], dtype=float)

    mean = MetricReport(
        precision=stack("precision").mean(axis=0),
        recall=stack("recall").mean(axis=0),
        f_score=stack("f_score").mean(axis=0),
        macro_precision=float(scalars("macro_precision").mean()),
        macro_recall=float(scalars("macro_recall").mean()),
        macro_f=float(scalars("macro_f").mean()),
    )
    std = MetricReport(
        precision=stack("precision").std(axis=0),
        recall=stack("recall").std(axis=0),
        f_score=stack("f_score").std(axis=0),
        macro_precision=float(scalars("macro_precision").std()),
        macro_recall=float(scalars("macro_recall").std()),
        macro_f=float(scalars("macro_f").std()),
    )
    return mean, std


def format_cell(mean: float, std: float) -> str:
    """Display form 'm.mmm (s.sss)'; values keep full precision elsewhere."""
    return f"{mean:.3f} ({std:.3f})"
