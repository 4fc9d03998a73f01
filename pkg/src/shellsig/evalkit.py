"""Threshold classification, confusion metrics, ROC/AUC and cross-dataset reports.

The positive class is "forged" (label 1) and the score is the embedding
distance: larger distances are predicted forged. This module emits data
only; figures are drawn by :mod:`shellsig.plotting`.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyInput, OneClassOnly


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def as_matrix(self) -> np.ndarray:
        """Layout [[TP, FP], [FN, TN]]."""
        return np.array([[self.tp, self.fp], [self.fn, self.tn]])


@dataclass(frozen=True)
class Metrics:
    """Derived rates; ``None`` marks a metric whose denominator is zero."""

    accuracy: float | None
    precision: float | None
    recall: float | None
    f1: float | None


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


@dataclass
class EvalReport:
    name: str
    confusion: ConfusionMatrix
    metrics: Metrics
    roc: RocCurve
    auc: float
    threshold: float
    n_pairs: int

    def to_dict(self, include_roc: bool = True) -> dict:
        d = {
            "name": self.name,
            "n_pairs": self.n_pairs,
            "threshold": self.threshold,
            "confusion": asdict(self.confusion),
            "metrics": asdict(self.metrics),
            "auc": self.auc,
        }
        if include_roc:
            d["roc"] = {"fpr": self.roc.fpr.tolist(), "tpr": self.roc.tpr.tolist(),
                        "thresholds": [_json_float(t) for t in self.roc.thresholds]}
        return d


@dataclass
class CrossReport:
    reports: list[EvalReport]
    mean_auc: float
    std_auc: float
    group: str = ""
    train_sets: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "group": self.group,
            "train_sets": list(self.train_sets),
            "mean_auc": self.mean_auc,
            "std_auc": self.std_auc,
            "datasets": [r.to_dict() for r in self.reports],
        }


def _json_float(x: float):
    return x if np.isfinite(x) else ("inf" if x > 0 else "-inf")


def _arrays(distances, labels):
    d = np.asarray(distances, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if d.size == 0:
        raise EmptyInput("no distances given")
    if d.shape != y.shape:
        raise ValueError("distances and labels differ in length")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 (genuine) or 1 (forged)")
    return d, y.astype(int)


def classify_threshold(distances, labels, t: float = 0.5) -> ConfusionMatrix:
    """Predict forged when distance >= t (a tie counts as forged)."""
    d, y = _arrays(distances, labels)
    pred = d >= t
    return ConfusionMatrix(
        tp=int(np.sum(pred & (y == 1))),
        fp=int(np.sum(pred & (y == 0))),
        fn=int(np.sum(~pred & (y == 1))),
        tn=int(np.sum(~pred & (y == 0))),
    )


def _ratio(num, den):
    return num / den if den > 0 else None


def metrics(cm: ConfusionMatrix) -> Metrics:
    precision = _ratio(cm.tp, cm.tp + cm.fp)
    recall = _ratio(cm.tp, cm.tp + cm.fn)
    f1 = None
    if precision is not None and recall is not None and precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    return Metrics(_ratio(cm.tp + cm.tn, cm.total), precision, recall, f1)


def roc_curve(distances, labels) -> RocCurve:
    """One (FPR, TPR) point per threshold, sweeping from +inf down to -inf.

    Thresholds are the sorted unique distances framed by the two sentinels;
    at threshold t a sample is predicted forged when its distance >= t.
    """
    d, y = _arrays(distances, labels)
    n_pos, n_neg = int(y.sum()), int((1 - y).sum())
    if n_pos == 0 or n_neg == 0:
        raise OneClassOnly("ROC needs both genuine and forged samples")
    order = np.argsort(-d, kind="mergesort")
    ds, ys = d[order], y[order]
    # last index of each run of equal distances
    last = np.r_[np.nonzero(np.diff(ds))[0], ds.size - 1]
    tps = np.cumsum(ys)[last]
    fps = np.cumsum(1 - ys)[last]
    tpr = np.r_[0.0, tps / n_pos, 1.0]
    fpr = np.r_[0.0, fps / n_neg, 1.0]
    thresholds = np.r_[np.inf, ds[last], -np.inf]
    return RocCurve(fpr, tpr, thresholds)


def auc(roc: RocCurve) -> float:
    """Trapezoidal area under the ROC curve."""
    return float(np.sum(np.diff(roc.fpr) * (roc.tpr[1:] + roc.tpr[:-1]) / 2.0))


def roc_auc(distances, labels) -> float:
    return auc(roc_curve(distances, labels))


@dataclass
class DistanceHistogram:
    edges: np.ndarray
    genuine: np.ndarray
    forged: np.ndarray

    def overlap(self) -> int:
        """Number of samples falling in bins shared by both classes (min-count sum)."""
        return int(np.minimum(self.genuine, self.forged).sum())


def distance_histogram(distances, labels, bins: int = 20) -> DistanceHistogram:
    """Per-class counts over shared, equal-width bin edges spanning all distances."""
    if bins < 1:
        raise ValueError("bins must be at least 1")
    d, y = _arrays(distances, labels)
    lo, hi = float(d.min()), float(d.max())
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, bins + 1)
    g, _ = np.histogram(d[y == 0], edges)
    f, _ = np.histogram(d[y == 1], edges)
    return DistanceHistogram(edges, g, f)


def evaluate(distances, labels, name: str = "", threshold: float = 0.5) -> EvalReport:
    d, y = _arrays(distances, labels)
    cm = classify_threshold(d, y, threshold)
    roc = roc_curve(d, y)
    return EvalReport(name, cm, metrics(cm), roc, auc(roc), threshold, int(d.size))


def summarize_spread(aucs) -> tuple[float, float]:
    """Mean and population standard deviation of per-dataset AUCs."""
    a = np.asarray(list(aucs), dtype=np.float64)
    if a.size == 0:
        raise EmptyInput("no AUC values")
    return float(a.mean()), float(a.std(ddof=0))


def cross_report(scored: dict, threshold: float = 0.5, group: str = "", train_sets=()) -> CrossReport:
    """Per-dataset reports from ``{dataset: (distances, labels)}`` plus the AUC spread."""
    if not scored:
        raise EmptyInput("cross report needs at least one test dataset")
    reports = [evaluate(d, y, name, threshold) for name, (d, y) in scored.items()]
    mean, std = summarize_spread(r.auc for r in reports)
    return CrossReport(reports, mean, std, group, list(train_sets))


# --------------------------------------------------------------------------
# export


def write_report_json(path, report) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    return path


def write_cross_csv(path, report: CrossReport) -> Path:
    """Flat rows: group, train_sets, test_set, auc (plus a summary row per statistic)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    train = "+".join(report.train_sets)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["group", "train_sets", "test_set", "auc"])
        for r in report.reports:
            w.writerow([report.group, train, r.name, repr(r.auc)])
        w.writerow([report.group, train, "MEAN", repr(report.mean_auc)])
        w.writerow([report.group, train, "STD", repr(report.std_auc)])
    return path


def write_roc_csv(path, roc: RocCurve) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "fpr", "tpr"])
        for t, f, p in zip(roc.thresholds, roc.fpr, roc.tpr):
            w.writerow([repr(float(t)), repr(float(f)), repr(float(p))])
    return path


def write_histogram_csv(path, hist: DistanceHistogram) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_lo", "bin_hi", "genuine", "forged"])
        for i in range(len(hist.genuine)):
            w.writerow([repr(float(hist.edges[i])), repr(float(hist.edges[i + 1])), int(hist.genuine[i]), int(hist.forged[i])])
    return path


def write_scores_csv(path, distances, labels) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["distance", "label"])
        for d, y in zip(distances, labels):
            w.writerow([repr(float(d)), int(y)])
    return path
