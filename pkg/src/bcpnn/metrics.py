"""Accuracy, ROC curves and AUC for two-class scores.

``roc_auc`` groups tied scores into a single threshold step, so ties appear
as diagonal ROC segments and the trapezoidal area equals the Mann-Whitney
statistic P(score_signal > score_background) + 0.5 * P(equal).  The O(n^2)
``auc_oracle`` computes that statistic directly by counting pairs; both
paths reduce to the same integer numerator over ``2 * n_pos * n_neg``, so
they agree to the last bit and the test suite holds them to 1e-12.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


class MetricError(ValueError):
    """Metric is undefined for the given inputs (empty or single-class)."""


def _as_labels(labels) -> np.ndarray:
    out = np.asarray(labels)
    if out.ndim != 1:
        raise MetricError(f"labels must be one-dimensional, got shape {out.shape}")
    return out


def accuracy(predictions, labels) -> float:
    """Fraction of exact matches between two class vectors."""
    pred = np.asarray(predictions)
    lab = _as_labels(labels)
    if pred.shape != lab.shape:
        raise MetricError(f"length mismatch: {pred.shape} vs {lab.shape}")
    if lab.size == 0:
        raise MetricError("accuracy is undefined on empty input")
    return float(np.mean(pred == lab))


@dataclass
class RocCurve:
    """ROC curve: (fpr, tpr) points from (0,0) to (1,1) plus trapezoid area."""

    points: np.ndarray  # (K, 2) float64, columns (fpr, tpr)
    auc: float

    def to_csv(self, path) -> None:
        """Write the curve as ``fpr,tpr`` rows for external plotting."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["fpr", "tpr"])
            for fpr, tpr in self.points:
                writer.writerow([repr(float(fpr)), repr(float(tpr))])


def _split_scores(scores, labels):
    s = np.asarray(scores, dtype=np.float64)
    lab = _as_labels(labels)
    if s.shape != lab.shape:
        raise MetricError(f"length mismatch: {s.shape} vs {lab.shape}")
    if s.size == 0:
        raise MetricError("ROC is undefined on empty input")
    pos = lab == 1
    n_pos = int(pos.sum())
    n_neg = int(s.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise MetricError(f"ROC needs both classes, got {n_pos} positive / {n_neg} negative")
    return s, lab, n_pos, n_neg


def roc_auc(scores, labels) -> RocCurve:
    """ROC curve and AUC from real-valued scores and 0/1 labels.

    Thresholds sweep the sorted unique scores; equal scores collapse into
    one step.  The area is accumulated in exact integer arithmetic before
    the single final division, which keeps it identical to the pairwise
    Mann-Whitney count.
    """
    s, lab, n_pos, n_neg = _split_scores(scores, labels)

    order = np.argsort(-s, kind="stable")
    sorted_scores = s[order]
    sorted_pos = (lab[order] == 1).astype(np.int64)

    # Index of the last sample in each tie group of equal scores.
    last_in_group = np.flatnonzero(np.diff(sorted_scores) != 0)
    group_ends = np.concatenate([last_in_group, [s.size - 1]])

    tp = np.cumsum(sorted_pos)[group_ends]
    fp = group_ends + 1 - tp
    tp = np.concatenate([[0], tp])
    fp = np.concatenate([[0], fp])

    # 2 * area * n_pos * n_neg, exactly (all terms are small integers).
    twice_area = int(np.sum((fp[1:] - fp[:-1]) * (tp[1:] + tp[:-1])))
    auc = twice_area / (2 * n_pos * n_neg)

    points = np.column_stack([fp / n_neg, tp / n_pos])
    return RocCurve(points=points, auc=auc)


def auc_oracle(scores, labels) -> float:
    """Direct O(n^2) pairwise concordance AUC. Intended for tests."""
    s, lab, n_pos, n_neg = _split_scores(scores, labels)
    pos = s[lab == 1]
    neg = s[lab != 1]
    greater = int(np.sum(pos[:, None] > neg[None, :]))
    equal = int(np.sum(pos[:, None] == neg[None, :]))
    return (2 * greater + equal) / (2 * n_pos * n_neg)
