"""Shared evaluation: MAE/MSE pairs, the constant-mean baseline, and
best-of-k run selection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = ["MetricPair", "metric_pair", "mean_value_baseline", "best_of_runs"]


@dataclass(frozen=True)
class MetricPair:
    mae: float
    mse: float

    def __post_init__(self):
        if not (np.isfinite(self.mae) and np.isfinite(self.mse)):
            raise ValueError("metrics must be finite")
        if self.mae < 0 or self.mse < 0:
            raise ValueError("metrics must be >= 0")


def metric_pair(pred: np.ndarray, truth: np.ndarray) -> MetricPair:
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {truth.shape}")
    if pred.size == 0:
        raise ValueError("empty input")
    diff = pred - truth
    return MetricPair(float(np.abs(diff).mean()), float((diff ** 2).mean()))


def mean_value_baseline(train_labels: np.ndarray, eval_labels: np.ndarray) -> MetricPair:
    """Predict the training-label mean everywhere; a model doing worse than
    this is considered ineffective."""
    train_labels = np.asarray(train_labels, dtype=np.float64)
    eval_labels = np.asarray(eval_labels, dtype=np.float64)
    if train_labels.size == 0 or eval_labels.size == 0:
        raise ValueError("empty input")
    prediction = np.full_like(eval_labels, train_labels.mean())
    return metric_pair(prediction, eval_labels)


_CRITERIA = {
    "original_mae": lambda r: r.original_train.mae,
    "attack_mae": lambda r: r.attack_train.mae,
}


def best_of_runs(results: Sequence, criterion: str = "original_mae"):
    """Minimum-MAE run under the chosen criterion; ties go to the earliest
    run. Works on any objects exposing original_train / attack_train pairs."""
    if not results:
        raise ValueError("no runs to select from")
    try:
        key = _CRITERIA[criterion]
    except KeyError:
        raise ValueError(f"criterion must be one of {sorted(_CRITERIA)}") from None
    best = results[0]
    best_value = key(best)
    for r in results[1:]:
        value = key(r)
        if value < best_value:
            best, best_value = r, value
    return best
