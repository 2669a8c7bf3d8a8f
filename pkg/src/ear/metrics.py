"""Evaluation primitives: AUROC, TNR@TPR, macro-F1, windowed moving averages.

Binary metrics treat in-distribution as the positive class and expect
scores oriented so that larger means more positive.
"""

from __future__ import annotations

from collections import deque

import numpy as np
from scipy.stats import rankdata

from .errors import MetricError


def _check_two_classes(labels: np.ndarray):
    if labels.size == 0 or labels.min() == labels.max():
        raise MetricError("both classes must be present")


def auroc(scores, labels) -> float:
    """Area under the ROC curve via midranks (Mann-Whitney statistic).

    ``labels`` are binary with 1 = positive; ties in ``scores`` get the
    average rank so tied pairs count one half each.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int64)
    if scores.shape != labels.shape:
        raise MetricError("scores and labels must have equal length")
    _check_two_classes(labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    ranks = rankdata(scores)
    rank_sum = ranks[labels == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def tnr_at_tpr(scores, labels, tpr: float) -> float:
    """True-negative rate at the largest threshold whose TPR >= ``tpr``.

    Positives are predicted where score >= threshold.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int64)
    if scores.shape != labels.shape:
        raise MetricError("scores and labels must have equal length")
    if not (0.0 < tpr < 1.0):
        raise MetricError("tpr must lie strictly inside (0, 1)")
    _check_two_classes(labels)
    pos = np.sort(scores[labels == 1])
    neg = scores[labels == 0]
    # Largest threshold keeping at least ceil(tpr * n_pos) positives.
    need = int(np.ceil(tpr * pos.size))
    threshold = pos[pos.size - need]
    return float(np.mean(neg < threshold))


def macro_f1(pred, truth) -> float:
    """Unweighted mean of per-class F1; a class absent from both sides
    of a true/predicted positive set contributes 0."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise MetricError("pred and truth must have equal length")
    if pred.size == 0:
        raise MetricError("empty input")
    classes = np.union1d(pred, truth)
    scores = []
    for c in classes:
        tp = np.sum((pred == c) & (truth == c))
        fp = np.sum((pred == c) & (truth != c))
        fn = np.sum((pred != c) & (truth == c))
        denom = 2 * tp + fp + fn
        scores.append(0.0 if denom == 0 else 2 * tp / denom)
    return float(np.mean(scores))


def optimal_macro_f1_threshold(scores, labels) -> tuple[float, float]:
    """Sweep thresholds on ``scores`` (1 = positive where score >= t) and
    return (best threshold, best macro-F1). Offline evaluation only."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int64)
    _check_two_classes(labels)
    candidates = np.unique(scores)
    best_t, best_f1 = candidates[0], -1.0
    for t in candidates:
        f1 = macro_f1((scores >= t).astype(int), labels)
        if f1 > best_f1:
            best_t, best_f1 = float(t), f1
    return best_t, best_f1


class MovingAverage:
    """Mean over the last ``window`` values since the most recent reset."""

    def __init__(self, window: int = 50):
        if window < 1:
            raise MetricError("window must be >= 1")
        self.window = window
        self._buf: deque[float] = deque(maxlen=window)

    def update(self, value: float) -> float:
        self._buf.append(float(value))
        return self.value

    def reset(self):
        self._buf.clear()

    @property
    def value(self) -> float:
        if not self._buf:
            return float("nan")
        return sum(self._buf) / len(self._buf)


def moving_average(values, window: int = 50, resets=()) -> list[float]:
    """Trace of windowed means; indices in ``resets`` clear the buffer
    before that value is consumed."""
    resets = set(resets)
    ma = MovingAverage(window)
    out = []
    for i, v in enumerate(values):
        if i in resets:
            ma.reset()
        out.append(ma.update(v))
    return out
