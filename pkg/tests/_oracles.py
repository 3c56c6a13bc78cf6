"""Independent reference implementations used to cross-check the package.

Everything here is written straight from the mathematical definitions with
deliberately naive algorithms (loops, exhaustive scans, finite differences)
so that agreement with the package is meaningful.
"""

from __future__ import annotations

import math

import numpy as np


def knn_bruteforce(memory: np.ndarray, index: int, k: int) -> list[int]:
    """Indices of the k nearest rows to memory[index], self excluded.

    Euclidean distance, ties broken toward the lower index.
    """
    query = memory[index]
    scored = []
    for j in range(memory.shape[0]):
        if j == index:
            continue
        d = math.sqrt(float(np.sum((memory[j] - query) ** 2)))
        scored.append((d, j))
    scored.sort()  # (distance, index) lexicographic: lower index wins ties
    return [j for _, j in scored[:k]]


def segment_fit(sample: np.ndarray, origin: np.ndarray, end: np.ndarray) -> tuple[float, float]:
    """Least-squares interpolation parameter and residual for
    sample = origin + u * (end - origin)."""
    seg = end - origin
    diff = sample - origin
    denom = float(np.dot(seg, seg))
    if denom == 0.0:
        return 0.0, float(np.max(np.abs(diff)))
    u = float(np.dot(diff, seg)) / denom
    residual = float(np.max(np.abs(diff - u * seg)))
    return u, residual


def on_some_segment(
    sample: np.ndarray, memory: np.ndarray, neighbor_lists: list[list[int]], tol: float
) -> bool:
    """True if the sample lies on a segment from some stored point to one of
    its listed neighbors, with interpolation weight in [0, 1]."""
    scale = max(1.0, float(np.max(np.abs(memory))))
    for j in range(memory.shape[0]):
        for l in neighbor_lists[j]:
            u, residual = segment_fit(sample, memory[j], memory[l])
            if residual <= tol * scale and -tol <= u <= 1.0 + tol:
                return True
    return False


def fd_gradient(f, theta: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function, every coordinate."""
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        bumped = theta.copy()
        bumped[i] = theta[i] + h
        f_plus = f(bumped)
        bumped[i] = theta[i] - h
        f_minus = f(bumped)
        grad[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))
    return float(np.max(np.abs(analytic - numeric) / denom))


def counting_confusion(y_true, y_pred, n_classes: int) -> np.ndarray:
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    for t, p in zip(y_true, y_pred, strict=True):
        counts[int(t), int(p)] += 1
    return counts


def metric_oracle(cm: np.ndarray) -> dict:
    """Per-class precision/recall/F and macro averages, pure Python loops.

    0/0 cases are defined as 0, matching the package's guard.
    """
    n = cm.shape[0]
    precision, recall, f_score = [], [], []
    for c in range(n):
        tp = float(cm[c, c])
        col = float(sum(cm[r, c] for r in range(n)))
        row = float(sum(cm[c, p] for p in range(n)))
        p = tp / col if col > 0 else 0.0
        r = tp / row if row > 0 else 0.0
        f = 2.0 * p * r / (p + r) if (p + r) > 0 else 0.0
        precision.append(p)
        recall.append(r)
        f_score.append(f)
    return {
        "precision": precision,
        "recall": recall,
        "f": f_score,
        "macro_precision": sum(precision) / n,
        "macro_recall": sum(recall) / n,
        "macro_f": sum(f_score) / n,
    }


def two_pass_moments(values) -> tuple[float, float]:
    """Mean and population standard deviation, computed in two passes."""
    vals = [float(v) for v in values]
    n = len(vals)
    mean = sum(vals) / n
    var = sum((v - mean) ** 2 for v in vals) / n
    return mean, math.sqrt(var)
