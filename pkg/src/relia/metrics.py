"""ROC-AUC, cross-fold aggregation, and the selective-prediction report."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, UndefinedMetricError


def roc_auc(scores, labels) -> float:
    """Tie-aware ROC-AUC via the rank (Mann-Whitney) formulation.

    Equals (#{positive > negative} + 0.5 * #ties) / (n_pos * n_neg), the
    probability that a random positive outscores a random negative.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ConfigError(f"scores {scores.shape} and labels {labels.shape} must be equal-length vectors")
    if not np.isin(labels, (0, 1)).all():
        raise ConfigError("labels must be binary")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs both classes present")
    # midranks: ties within a group share the average of their 1-based ranks
    _, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    ends = np.cumsum(counts)
    midranks = (ends - (counts - 1) / 2.0)[inverse]
    rank_sum = midranks[labels == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def fold_aggregate(fold_aucs) -> tuple[float, float]:
    """Mean and sample (n-1) standard deviation across fold metrics.

    Sums via math.fsum, so both outputs are exactly permutation-invariant.
    """
    values = [float(v) for v in fold_aucs]
    if len(values) < 2:
        raise UndefinedMetricError("fold aggregation needs at least 2 folds")
    mean = math.fsum(values) / len(values)
    variance = math.fsum((v - mean) ** 2 for v in values) / (len(values) - 1)
    return mean, math.sqrt(variance)


@dataclass(frozen=True)
class SelectiveReport:
    """Accuracy split by the uncertainty threshold; None marks an empty partition."""

    n_low: int
    acc_low: float | None
    n_high: int
    acc_high: float | None


def selective_report(predictions, labels, threshold: float) -> SelectiveReport:
    """Partition by uncertainty <= threshold and report per-partition accuracy.

    The decision rule is prob_positive >= 0.5.  Accuracy over an empty
    partition is reported as None, never 0.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if len(predictions) != labels.size:
        raise ConfigError("predictions and labels differ in length")
    uncertainty = np.array([p.uncertainty for p in predictions])
    predicted = np.array([1 if p.mean_probs[1] >= 0.5 else 0 for p in predictions])
    low = uncertainty <= threshold
    correct = predicted == labels

    def acc(mask) -> float | None:
        return float(correct[mask].mean()) if mask.any() else None

    return SelectiveReport(int(low.sum()), acc(low), int((~low).sum()), acc(~low))


@dataclass
class EvalReport:
    """Cross-validated evaluation summary, serializable as JSON."""

    auc: float | None
    fold_aucs: list[float]
    fold_mean: float | None
    fold_std: float | None
    selective: SelectiveReport | None = None
    threshold_used: float | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        selective = None
        if self.selective is not None:
            selective = {
                "n_low": self.selective.n_low,
                "acc_low": self.selective.acc_low,
                "n_high": self.selective.n_high,
                "acc_high": self.selective.acc_high,
            }
        out = {
            "auc": self.auc,
            "fold_aucs": list(self.fold_aucs),
            "fold_mean": self.fold_mean,
            "fold_std": self.fold_std,
            "selective": selective,
            "threshold_used": self.threshold_used,
        }
        out.update(self.extra)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def save_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_json())
            f.write("\n")


def write_example_csv(path, scores, labels, uncertainties, threshold: float) -> None:
    """Per-example export: score, label, uncertainty, and which partition it fell in."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    uncertainties = np.asarray(uncertainties, dtype=np.float64)
    if not scores.size == labels.size == uncertainties.size:
        raise ConfigError("score/label/uncertainty columns differ in length")
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["score", "label", "uncertainty", "partition"])
        for s, y, u in zip(scores, labels, uncertainties):
            writer.writerow([repr(float(s)), int(y), repr(float(u)), "low" if u <= threshold else "high"])
