"""Confusion-matrix counts and the five evaluation metrics.

Defect is the positive class. Metrics with a zero denominator are reported
as 0 with a per-metric flag instead of raising, so batch evaluation always
completes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class EvalReport:
    tp: int
    fp: int
    tn: int
    fn: int
    accuracy: float
    precision: float
    recall: float
    f1: float
    specificity: float
    # Metrics whose denominator was zero and were therefore reported as 0.
    flags: dict[str, bool] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @classmethod
    def from_counts(cls, tp: int, fp: int, tn: int, fn: int) -> "EvalReport":
        total = tp + fp + tn + fn
        if total == 0:
            raise ParameterError("cannot evaluate an empty prediction set")
        flags = {}

        def ratio(name: str, num: int, den: int) -> float:
            if den == 0:
                flags[name] = True
                return 0.0
            flags[name] = False
            return num / den

        accuracy = (tp + tn) / total
        precision = ratio("precision", tp, tp + fp)
        recall = ratio("recall", tp, tp + fn)
        specificity = ratio("specificity", tn, tn + fp)
        if precision + recall == 0.0:
            flags["f1"] = True
            f1 = 0.0
        else:
            flags["f1"] = False
            f1 = 2.0 * precision * recall / (precision + recall)
        flags["accuracy"] = False
        return cls(tp=tp, fp=fp, tn=tn, fn=fn, accuracy=accuracy, precision=precision,
                   recall=recall, f1=f1, specificity=specificity, flags=flags)

    @classmethod
    def from_predictions(cls, y_true: np.ndarray, y_pred: np.ndarray) -> "EvalReport":
        """Counts from per-sample 0/1 labels and predictions (1 = defect)."""
        y_true = np.asarray(y_true).astype(bool)
        y_pred = np.asarray(y_pred).astype(bool)
        if y_true.shape != y_pred.shape:
            raise ParameterError("label and prediction vectors must have equal length")
        tp = int(np.sum(y_true & y_pred))
        fp = int(np.sum(~y_true & y_pred))
        tn = int(np.sum(~y_true & ~y_pred))
        fn = int(np.sum(y_true & ~y_pred))
        return cls.from_counts(tp, fp, tn, fn)

    def counts_dict(self) -> dict[str, int]:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}

    def metrics_dict(self) -> dict[str, float]:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "specificity": self.specificity,
        }

    def to_json_dict(self) -> dict:
        return {
            "counts": self.counts_dict(),
            "metrics": self.metrics_dict(),
            "flags": dict(self.flags),
        }
