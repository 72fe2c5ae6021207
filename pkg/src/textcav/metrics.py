"""Ranking and thresholded classification metrics, and the two-sided Welch t-test."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import betainc
from scipy.stats import rankdata


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class MetricReport:
    auc: float
    f1: float
    precision: float
    recall: float
    average_precision: float
    threshold: float
    n_positive: int
    n_negative: int
    zero_division: bool = False

    CSV_FIELDS = ("auc", "f1", "precision", "recall", "average_precision", "threshold", "n_positive", "n_negative")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def csv_row(self) -> list[str]:
        return [fmt(getattr(self, k)) for k in self.CSV_FIELDS]


def fmt(value) -> str:
    """Fixed textual form for CSV cells so reruns produce identical bytes."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float) and math.isnan(value):
        return "nan"
    return f"{float(value):.6f}"


def _as_binary(y_true) -> np.ndarray:
    y = np.asarray(y_true)
    if y.ndim != 1:
        y = y.ravel()
    return y.astype(bool)


def roc_auc(y_true, y_score) -> float:
    """Probability that a random positive outranks a random negative (ties count 1/2)."""
    y = _as_binary(y_true)
    s = np.asarray(y_score, dtype=np.float64).ravel()
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("roc_auc needs both classes")
    ranks = rankdata(s, method="average")
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def average_precision(y_true, y_score) -> float:
    """Sum over descending distinct-score thresholds of (R_k - R_{k-1}) * P_k."""
    y = _as_binary(y_true)
    s = np.asarray(y_score, dtype=np.float64).ravel()
    n_pos = int(y.sum())
    if n_pos == 0:
        raise MetricError("average_precision needs at least one positive")
    order = np.argsort(-s, kind="mergesort")
    s_sorted = s[order]
    y_sorted = y[order]
    tp = np.cumsum(y_sorted)
    # last index of each run of equal scores is a threshold
    last = np.r_[np.nonzero(np.diff(s_sorted))[0], len(s_sorted) - 1]
    tp_k = tp[last].astype(np.float64)
    precision = tp_k / (last + 1)
    recall = tp_k / n_pos
    prev = np.r_[0.0, recall[:-1]]
    return float(np.sum((recall - prev) * precision))


def f1_precision_recall(predicted, actual) -> tuple[float, float, float, bool]:
    """(f1, precision, recall, zero_division) on the positive class."""
    p = _as_binary(predicted)
    a = _as_binary(actual)
    if len(p) == 0 or len(p) != len(a):
        raise MetricError("predictions must be non-empty and aligned with labels")
    tp = int(np.sum(p & a))
    fp = int(np.sum(p & ~a))
    fn = int(np.sum(~p & a))
    flag = False
    if tp + fp == 0:
        precision, flag = 0.0, True
    else:
        precision = tp / (tp + fp)
    if tp + fn == 0:
        recall, flag = 0.0, True
    else:
        recall = tp / (tp + fn)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return f1, precision, recall, flag


def metric_report(y_true, y_score, threshold: float = 0.5) -> MetricReport:
    """Report for probability scores; predictions are ``score >= threshold``."""
    y = _as_binary(y_true)
    s = np.asarray(y_score, dtype=np.float64).ravel()
    f1, prec, rec, flag = f1_precision_recall(s >= threshold, y)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    auc = roc_auc(y, s) if n_pos and n_neg else float("nan")
    ap = average_precision(y, s) if n_pos else float("nan")
    return MetricReport(auc, f1, prec, rec, ap, threshold, n_pos, n_neg, flag)


@dataclass(frozen=True)
class TTestResult:
    t_statistic: float
    p_value: float
    df: float
    alpha: float

    @property
    def significant(self) -> bool:
        return self.p_value <= self.alpha


def t_sf_two_sided(t: float, df: float) -> float:
    """P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    if math.isinf(t):
        return 0.0
    return float(betainc(df / 2.0, 0.5, df / (df + t * t)))


def welch_t_test(a, b, alpha: float = 0.001) -> TTestResult:
    """Two-sided Welch unequal-variance t-test."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) < 2 or len(b) < 2:
        raise MetricError("welch_t_test needs at least two observations per sample")
    ma, mb = a.mean(), b.mean()
    va, vb = a.var(ddof=1) / len(a), b.var(ddof=1) / len(b)
    se2 = va + vb
    if se2 == 0.0:
        if ma == mb:
            return TTestResult(0.0, 1.0, float(len(a) + len(b) - 2), alpha)
        t = math.copysign(math.inf, ma - mb)
        return TTestResult(t, 0.0, float(len(a) + len(b) - 2), alpha)
    t = float((ma - mb) / math.sqrt(se2))
    df = se2**2 / (va**2 / (len(a) - 1) + vb**2 / (len(b) - 1))
    return TTestResult(t, t_sf_two_sided(t, df), float(df), alpha)
