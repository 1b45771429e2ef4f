"""Binary classification metrics: confusion counts, ACC/Precision/Recall/F1
(beta = 1), and ROC AUC.

The positive class is "stable" (label 1).  Metrics with a zero denominator
are reported as None (undefined), which is distinct from 0.  AUC integrates
the ROC curve with the trapezoidal rule over tied-score groups, which equals
the Mann-Whitney statistic (ties counted one half); the test suite holds it
against a brute-force pairwise-counting oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class MetricsReport:
    acc: float | None
    precision: float | None
    recall: float | None
    f1: float | None
    auc: float | None
    tp: int
    tn: int
    fp: int
    fn: int
    split: str = ""
    variant: str = ""
    method: str = ""
    seed: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def confusion_metrics(predictions, labels, split: str = "", variant: str = "",
                      method: str = "", seed: int = 0) -> MetricsReport:
    predictions = np.asarray(predictions, dtype=int)
    labels = np.asarray(labels, dtype=int)
    if predictions.shape != labels.shape or predictions.size == 0:
        raise ValueError("predictions and labels must be equal-length and non-empty")
    if not set(np.unique(predictions)) <= {0, 1} or not set(np.unique(labels)) <= {0, 1}:
        raise ValueError("binary values expected")

    tp = int(np.sum((predictions == 1) & (labels == 1)))
    tn = int(np.sum((predictions == 0) & (labels == 0)))
    fp = int(np.sum((predictions == 1) & (labels == 0)))
    fn = int(np.sum((predictions == 0) & (labels == 1)))

    total = tp + tn + fp + fn
    acc = (tp + tn) / total
    precision = tp / (tp + fp) if tp + fp else None
    recall = tp / (tp + fn) if tp + fn else None
    if precision is None or recall is None or precision + recall == 0:
        f1 = None
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    return MetricsReport(acc=acc, precision=precision, recall=recall, f1=f1,
                         auc=None, tp=tp, tn=tn, fp=fp, fn=fn,
                         split=split, variant=variant, method=method, seed=seed)


def auc(scores, labels) -> float | None:
    """Area under the ROC curve; None if only one class is present."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if scores.shape != labels.shape or scores.size == 0:
        raise ValueError("scores and labels must be equal-length and non-empty")
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        return None

    # ROC from tied-score groups, descending score; trapezoids handle ties.
    order = np.argsort(-scores, kind="stable")
    s, y = scores[order], labels[order]
    area = 0.0
    tp = fp = 0
    i = 0
    while i < len(s):
        j = i
        while j < len(s) and s[j] == s[i]:
            j += 1
        dtp = int(np.sum(y[i:j] == 1))
        dfp = (j - i) - dtp
        # trapezoid between (fp, tp) and (fp+dfp, tp+dtp), normalized later
        area += dfp * (tp + tp + dtp) / 2.0
        tp += dtp
        fp += dfp
        i = j
    return float(area / (n_pos * n_neg))


def attach_auc(report: MetricsReport, scores, labels) -> MetricsReport:
    report.auc = auc(scores, labels)
    return report
