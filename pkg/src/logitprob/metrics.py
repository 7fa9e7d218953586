"""Calibration and recognition metrics.

Reliability bins are ``I_m = ((m-1)/M, m/M]``; a confidence of exactly 0
falls in the first bin. ECE weights each bin's absolute accuracy/confidence
gap by its share of the samples, MCE is the largest gap over non-empty bins.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, EmptyInput, NoPositives
from .inference import ScoreVector

DEFAULT_RELIABILITY_BINS = 15


@dataclass(frozen=True)
class ReliabilityBin:
    range_low: float
    range_high: float
    count: int
    accuracy: float
    avg_confidence: float

    @property
    def gap(self) -> float:
        """Signed ``accuracy - avg_confidence``; zero for empty bins."""
        return self.accuracy - self.avg_confidence


@dataclass(frozen=True)
class ReliabilityReport:
    bin_count: int
    bins: tuple[ReliabilityBin, ...]
    ece: float
    mce: float

    @property
    def n(self) -> int:
        return sum(b.count for b in self.bins)

    def to_dict(self) -> dict:
        return {
            "bin_count": self.bin_count,
            "ece": self.ece,
            "mce": self.mce,
            "bins": [
                {
                    "range_low": b.range_low,
                    "range_high": b.range_high,
                    "count": b.count,
                    "accuracy": b.accuracy,
                    "avg_confidence": b.avg_confidence,
                    "gap": b.gap,
                }
                for b in self.bins
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> ReliabilityReport:
        bins = tuple(
            ReliabilityBin(b["range_low"], b["range_high"], b["count"], b["accuracy"], b["avg_confidence"])
            for b in data["bins"]
        )
        return cls(data["bin_count"], bins, data["ece"], data["mce"])


def reliability_bin_index(confidence: np.ndarray, n_bins: int) -> np.ndarray:
    """Zero-based bin of each confidence under ``((m-1)/M, m/M]``."""
    c = np.asarray(confidence, dtype=np.float64)
    m = np.ceil(c * n_bins).astype(np.int64)
    # c*M can round across a boundary; compare against the stored bin edges
    m = np.where(c <= (m - 1) / n_bins, m - 1, m)
    m = np.where(c > m / n_bins, m + 1, m)
    return np.clip(m, 1, n_bins) - 1


def reliability_from_arrays(confidence, correct, n_bins: int = DEFAULT_RELIABILITY_BINS) -> ReliabilityReport:
    if n_bins < 1:
        raise ConfigError(f"reliability bins must be >= 1, got {n_bins}")
    conf = np.asarray(confidence, dtype=np.float64)
    hit = np.asarray(correct, dtype=bool)
    n = conf.size
    if n == 0:
        raise EmptyInput("no scored samples")
    idx = reliability_bin_index(conf, n_bins)
    counts = np.bincount(idx, minlength=n_bins)
    hits = np.bincount(idx, weights=hit.astype(np.float64), minlength=n_bins)
    conf_sum = np.bincount(idx, weights=conf, minlength=n_bins)

    bins = []
    ece = 0.0
    mce = 0.0
    for m in range(n_bins):
        k = int(counts[m])
        acc = hits[m] / k if k else 0.0
        avg = conf_sum[m] / k if k else 0.0
        bins.append(ReliabilityBin(m / n_bins, (m + 1) / n_bins, k, float(acc), float(avg)))
        if k:
            gap = abs(acc - avg)
            ece += k / n * gap
            mce = max(mce, gap)
    return ReliabilityReport(n_bins, tuple(bins), float(ece), float(mce))


def reliability(
    scored: Iterable[tuple[ScoreVector, int]], n_bins: int = DEFAULT_RELIABILITY_BINS
) -> ReliabilityReport:
    """Reliability table, ECE and MCE for ``(score vector, true label)`` pairs."""
    pairs = list(scored)
    conf = [sv.confidence for sv, _ in pairs]
    hit = [sv.predicted_class == y for sv, y in pairs]
    return reliability_from_arrays(conf, hit, n_bins)


def confusion_counts(predicted, labels, nc: int) -> np.ndarray:
    """``nc x nc`` matrix with rows = true class, columns = predicted class."""
    cm = np.zeros((nc, nc), dtype=np.int64)
    np.add.at(cm, (np.asarray(labels, dtype=np.intp), np.asarray(predicted, dtype=np.intp)), 1)
    return cm


def _pairs_to_confusion(scored) -> np.ndarray:
    pairs = list(scored)
    if not pairs:
        raise EmptyInput("no scored samples")
    nc = pairs[0][0].scores.size
    return confusion_counts([sv.predicted_class for sv, _ in pairs], [y for _, y in pairs], nc)


def macro_fscore_from_confusion(cm: np.ndarray) -> float:
    tp = np.diag(cm).astype(np.float64)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    # F1 = 2TP / (2TP + FP + FN); classes with a zero denominator score 0
    denom = 2 * tp + fp + fn
    f1 = np.divide(2 * tp, denom, out=np.zeros_like(tp), where=denom > 0)
    return float(f1.mean())


def macro_fpr_from_confusion(cm: np.ndarray) -> float:
    tp = np.diag(cm).astype(np.float64)
    fp = cm.sum(axis=0) - tp
    tn = cm.sum() - cm.sum(axis=0) - cm.sum(axis=1) + tp
    denom = fp + tn
    fpr = np.divide(fp, denom, out=np.zeros_like(tp), where=denom > 0)
    return float(fpr.mean())


def macro_fscore(scored: Iterable[tuple[ScoreVector, int]]) -> float:
    """Unweighted mean of per-class one-vs-rest F1."""
    return macro_fscore_from_confusion(_pairs_to_confusion(scored))


def macro_fpr(scored: Iterable[tuple[ScoreVector, int]]) -> float:
    """Unweighted mean of per-class ``FP / (FP + TN)``."""
    return macro_fpr_from_confusion(_pairs_to_confusion(scored))


def unseen_stats(scored: Sequence[ScoreVector]) -> tuple[float, float]:
    """Mean and sample variance of the confidence (max score)."""
    conf = np.array([sv.confidence for sv in scored], dtype=np.float64)
    if conf.size == 0:
        raise EmptyInput("no unseen samples")
    var = float(conf.var(ddof=1)) if conf.size > 1 else 0.0
    return float(conf.mean()), var


@dataclass(frozen=True)
class PRCurve:
    """Precision/recall sweep for one class.

    ``points`` starts at the anchor ``(0, 1)`` followed by one point per
    distinct score threshold, in order of decreasing threshold.
    """

    class_index: int
    points: tuple[tuple[float, float], ...]
    auc: float

    def to_dict(self) -> dict:
        return {
            "class_index": self.class_index,
            "auc": self.auc,
            "points": [list(p) for p in self.points],
        }


def trapezoid_area(points: Sequence[tuple[float, float]]) -> float:
    area = 0.0
    for (r0, p0), (r1, p1) in zip(points, points[1:]):
        area += (r1 - r0) * (p0 + p1) / 2.0
    return area


def pr_curve_from_arrays(scores, is_tp, total_positives: int, class_index: int = 0) -> PRCurve:
    if total_positives <= 0:
        raise NoPositives(f"class {class_index} has no ground-truth positives")
    s = np.asarray(scores, dtype=np.float64)
    tp_flags = np.asarray(is_tp, dtype=bool)
    order = np.argsort(-s, kind="stable")
    s, tp_flags = s[order], tp_flags[order]
    cum_tp = np.cumsum(tp_flags)
    cum_fp = np.cumsum(~tp_flags)
    points = [(0.0, 1.0)]
    # one point per distinct threshold: the last index of each run of equal scores
    last = np.flatnonzero(np.append(s[1:] != s[:-1], True)) if s.size else []
    for k in last:
        tp, fp = int(cum_tp[k]), int(cum_fp[k])
        points.append((tp / total_positives, tp / (tp + fp)))
    return PRCurve(class_index, tuple(points), trapezoid_area(points))


def pr_curve(
    detections: Sequence[tuple[ScoreVector, bool]], class_index: int, total_positives: int
) -> PRCurve:
    """Precision/recall curve ranked by ``scores[class_index]``, area by trapezoid."""
    scores = [float(sv.scores[class_index]) for sv, _ in detections]
    flags = [bool(tp) for _, tp in detections]
    return pr_curve_from_arrays(scores, flags, total_positives, class_index)


def isclose_report(a: ReliabilityReport, b: ReliabilityReport, tol: float = 1e-12) -> bool:
    if a.bin_count != b.bin_count:
        return False
    for x, y in zip(a.bins, b.bins):
        if x.count != y.count:
            return False
        if not (math.isclose(x.accuracy, y.accuracy, abs_tol=tol)
                and math.isclose(x.avg_confidence, y.avg_confidence, abs_tol=tol)):
            return False
    return math.isclose(a.ece, b.ece, abs_tol=tol) and math.isclose(a.mce, b.mce, abs_tol=tol)
