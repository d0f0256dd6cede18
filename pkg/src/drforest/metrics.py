"""Regression evaluation metrics: mean absolute error and cumulative score."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MetricsRecord:
    mae: float
    cs: float
    cs_level: float
    count: int
    within_count: int


def _per_sample_errors(predictions, truths):
    predictions = np.asarray(predictions, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.float64)
    if predictions.shape != truths.shape:
        raise ValueError(f"length mismatch: predictions {predictions.shape} vs truths {truths.shape}")
    if predictions.size == 0:
        raise ValueError("metrics need at least one sample")
    err = np.abs(predictions - truths)
    # multi-output targets score by the mean absolute error across dimensions
    return err.mean(axis=1) if err.ndim > 1 else err


def mae(predictions, truths):
    """Mean absolute error over the test set."""
    return float(np.mean(_per_sample_errors(predictions, truths)))


def cumulative_score(predictions, truths, level=5.0):
    """Percentage of samples with absolute error not greater than ``level``."""
    if level < 0:
        raise ValueError("cumulative score level must be non-negative")
    err = _per_sample_errors(predictions, truths)
    within = int(np.count_nonzero(err <= level))
    return 100.0 * within / err.shape[0]


def compute_metrics(predictions, truths, level=5.0):
    err = _per_sample_errors(predictions, truths)
    within = int(np.count_nonzero(err <= level))
    return MetricsRecord(
        mae=float(err.mean()),
        cs=100.0 * within / err.shape[0],
        cs_level=float(level),
        count=int(err.shape[0]),
        within_count=within,
    )
