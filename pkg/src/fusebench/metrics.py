"""Binary-classification metrics: ROC-AUC, precision/recall/F1, McNemar's
paired test, multi-run aggregation, and relative-gain computation.

AUC follows the Mann-Whitney convention (ties count one half) and is
computed by sweeping score thresholds and integrating the ROC curve with
the trapezoid rule, which is algebraically identical to exhaustive
positive-negative pair counting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

__all__ = [
    "RunMetrics",
    "AggregateMetrics",
    "McNemarOutcome",
    "roc_auc",
    "precision_recall_f1",
    "evaluate_scores",
    "mcnemar",
    "mcnemar_from_counts",
    "aggregate",
    "relative_gain",
]


def roc_auc(scores: Sequence[float], labels: Sequence[bool]) -> float:
    """Area under the ROC curve via a threshold sweep.

    Thresholds sweep the distinct score values from high to low; the area
    is accumulated with the trapezoid rule so tied positive/negative scores
    contribute exactly one half per pair.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError(f"scores {s.shape} and labels {y.shape} must be equal 1-D")
    n_pos = int(y.sum())
    n_neg = int(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc requires both classes to be present")

    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]

    tp = np.cumsum(y_sorted)
    fp = np.cumsum(~y_sorted)
    # Collapse tied scores: keep only the last index of each score block.
    distinct = np.nonzero(np.diff(s_sorted))[0]
    cut = np.concatenate([distinct, [s_sorted.size - 1]])
    tp = np.concatenate([[0], tp[cut]])
    fp = np.concatenate([[0], fp[cut]])

    area = np.trapezoid(tp, fp)
    return float(area / (n_pos * n_neg))


class PRF1(NamedTuple):
    precision: float
    recall: float
    f1: float


def precision_recall_f1(scores, labels, threshold: float = 0.5) -> PRF1:
    """Precision, recall, and F1 of ``score >= threshold`` predictions.

    Zero denominators follow the reporting convention: the affected metric
    is 0. Use ``evaluate_scores`` to also get the zero-division flag.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    pred = s >= threshold
    tp = int(np.sum(pred & y))
    fp = int(np.sum(pred & ~y))
    fn = int(np.sum(~pred & y))
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = (2 * precision * recall / (precision + recall)
          if precision + recall > 0 else 0.0)
    return PRF1(precision, recall, f1)


@dataclass
class RunMetrics:
    """Metrics of one run, with per-instance scores retained for pairing."""

    auc: float
    precision: float
    recall: float
    f1: float
    scores: np.ndarray
    labels: np.ndarray
    preds: np.ndarray
    zero_division: bool = False

    def as_row(self) -> dict:
        return {
            "auc": self.auc,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


def evaluate_scores(scores, labels, threshold: float = 0.5) -> RunMetrics:
    """Full metric record for one scored test set."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    pred = s >= threshold
    p, r, f1 = precision_recall_f1(s, y, threshold)
    zero_div = bool((pred.sum() == 0) or (y.sum() == 0))
    return RunMetrics(
        auc=roc_auc(s, y),
        precision=p,
        recall=r,
        f1=f1,
        scores=s,
        labels=y,
        preds=pred,
        zero_division=zero_div,
    )


@dataclass
class McNemarOutcome:
    b: int            # first classifier correct, second wrong
    c: int            # first classifier wrong, second correct
    statistic: float
    p_value: float
    method: str       # "exact_binomial" or "corrected_chi_square"


# Discordant-count threshold below which the exact binomial test is used.
EXACT_THRESHOLD = 25


def mcnemar(preds_a, preds_b, labels, method: str = "auto") -> McNemarOutcome:
    """McNemar's paired test on two prediction vectors.

    With ``method="auto"``, fewer than 25 discordant pairs select the exact
    two-sided binomial test; otherwise the continuity-corrected chi-square
    statistic (|b-c|-1)^2/(b+c) with one degree of freedom. Either variant
    can also be forced explicitly.
    """
    a = np.asarray(preds_a, dtype=bool)
    bb = np.asarray(preds_b, dtype=bool)
    y = np.asarray(labels, dtype=bool)
    if not (a.shape == bb.shape == y.shape) or a.ndim != 1 or a.size < 1:
        raise ValueError("mcnemar requires three equal-length 1-D arrays")
    if method not in ("auto", "exact", "corrected"):
        raise ValueError(f"unknown mcnemar method {method!r}")

    a_correct = a == y
    b_correct = bb == y
    return mcnemar_from_counts(
        int(np.sum(a_correct & ~b_correct)),
        int(np.sum(~a_correct & b_correct)),
        method,
    )


def mcnemar_from_counts(b_count: int, c_count: int,
                        method: str = "auto") -> McNemarOutcome:
    """Compute the test directly from discordant counts."""
    n = b_count + c_count
    if method == "exact" or (method == "auto" and n < EXACT_THRESHOLD):
        k = min(b_count, c_count)
        tail = sum(math.comb(n, i) for i in range(k + 1)) / 2.0 ** n
        p = min(1.0, 2.0 * tail)
        return McNemarOutcome(b_count, c_count, float(k), p, "exact_binomial")

    if n == 0:
        return McNemarOutcome(0, 0, 0.0, 1.0, "corrected_chi_square")
    statistic = (abs(b_count - c_count) - 1.0) ** 2 / n
    # Chi-square(1 df) survival function: P(X > x) = erfc(sqrt(x/2)).
    p = math.erfc(math.sqrt(statistic / 2.0))
    return McNemarOutcome(b_count, c_count, statistic, p, "corrected_chi_square")


@dataclass
class AggregateMetrics:
    """Mean and sample standard deviation (n-1) over repeated runs."""

    n_runs: int
    mean: dict = field(default_factory=dict)
    std: dict = field(default_factory=dict)


def aggregate(runs: Sequence[RunMetrics]) -> AggregateMetrics:
    if not runs:
        raise ValueError("aggregate requires at least one run")
    keys = ("auc", "precision", "recall", "f1")
    values = {k: np.array([getattr(r, k) for r in runs], dtype=np.float64)
              for k in keys}
    mean = {k: float(v.mean()) for k, v in values.items()}
    if len(runs) > 1:
        std = {k: float(v.std(ddof=1)) for k, v in values.items()}
    else:
        std = {k: 0.0 for k in keys}
    return AggregateMetrics(n_runs=len(runs), mean=mean, std=std)


def relative_gain(fusion_auc: float, best_single_auc: float) -> float:
    """Percent gain of a fusion AUC over the best single-modality AUC."""
    if best_single_auc <= 0:
        raise ValueError("best_single_auc must be positive")
    return 100.0 * (fusion_auc - best_single_auc) / best_single_auc
