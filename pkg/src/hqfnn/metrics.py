"""Confusion matrix and the accuracy / macro precision / recall / F1 suite."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import InvalidArgument


@dataclass
class ConfusionMatrix:
    """Counts indexed [true class, predicted class]."""

    k: int
    counts: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.k < 1:
            raise InvalidArgument("class count must be >= 1")
        if self.counts is None:
            self.counts = np.zeros((self.k, self.k), dtype=np.int64)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (self.k, self.k) or np.any(self.counts < 0):
            raise InvalidArgument("counts must be a non-negative k x k grid")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def accumulate(self, true_label: int, predicted_label: int) -> "ConfusionMatrix":
        for lab in (true_label, predicted_label):
            if not 0 <= lab < self.k:
                raise InvalidArgument(f"label {lab} outside [0, {self.k})")
        self.counts[true_label, predicted_label] += 1
        return self

    def update(self, true_labels, predicted_labels) -> "ConfusionMatrix":
        t = np.asarray(true_labels, dtype=np.int64)
        p = np.asarray(predicted_labels, dtype=np.int64)
        if t.shape != p.shape:
            raise InvalidArgument("label arrays differ in length")
        if t.size and (t.min() < 0 or p.min() < 0 or t.max() >= self.k or p.max() >= self.k):
            raise InvalidArgument(f"labels must lie in [0, {self.k})")
        np.add.at(self.counts, (t, p), 1)
        return self

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.k != self.k:
            raise InvalidArgument("cannot merge matrices with different class counts")
        return ConfusionMatrix(self.k, self.counts + other.counts)

    @classmethod
    def from_predictions(cls, true_labels, predicted_labels, k: int) -> "ConfusionMatrix":
        return cls(k).update(true_labels, predicted_labels)

    def to_csv(self, class_names=None) -> str:
        names = [str(c) for c in (class_names or range(self.k))]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["true\\pred"] + names)
        for name, row in zip(names, self.counts):
            w.writerow([name] + [int(v) for v in row])
        return buf.getvalue()


def accumulate(cm: ConfusionMatrix, true_label: int, predicted_label: int) -> ConfusionMatrix:
    return cm.accumulate(true_label, predicted_label)


def _ratio(num, den):
    return num / den if den else 0.0


def binary_metrics(cm: ConfusionMatrix, i: int) -> tuple[float, float]:
    """One-vs-rest (precision, recall) for class i; 0 where undefined."""
    tp = cm.counts[i, i]
    fp = cm.counts[:, i].sum() - tp
    fn = cm.counts[i, :].sum() - tp
    return float(_ratio(tp, tp + fp)), float(_ratio(tp, tp + fn))


class MetricBundle(NamedTuple):
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float


def macro_metrics(cm: ConfusionMatrix) -> MetricBundle:
    if cm.total == 0:
        raise InvalidArgument("cannot compute metrics from an empty confusion matrix")
    per_class = [binary_metrics(cm, i) for i in range(cm.k)]
    p = float(np.mean([pr for pr, _ in per_class]))
    r = float(np.mean([rc for _, rc in per_class]))
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return MetricBundle(float(np.trace(cm.counts)) / cm.total, p, r, f1)
