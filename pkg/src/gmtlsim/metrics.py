"""Evaluation metrics: rank-statistic ROC-AUC (ties get average ranks) and
mean absolute error."""

from __future__ import annotations

import numpy as np

from .errors import EvaluationError


def tied_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with equal values sharing the average of their ranks."""
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(len(v))
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and v[order[j + 1]] == v[order[i]]:
            j += 1
        avg = 0.5 * (i + j) + 1.0
        for t in range(i, j + 1):
            ranks[order[t]] = avg
        i = j + 1
    return ranks


def roc_auc(labels: np.ndarray, scores: np.ndarray) -> float:
    """AUC via the Mann-Whitney rank statistic.

    Equivalent to counting score pairs (positive vs negative) with ties
    worth half a win.
    """
    y = np.asarray(labels, dtype=np.float64).ravel()
    s = np.asarray(scores, dtype=np.float64).ravel()
    if y.shape != s.shape:
        raise EvaluationError("labels and scores must have equal length")
    pos = y == 1.0
    n_pos = int(pos.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError("ROC-AUC needs both classes present")
    ranks = tied_ranks(s)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def mean_absolute_error(targets: np.ndarray, preds: np.ndarray) -> float:
    t = np.asarray(targets, dtype=np.float64).ravel()
    p = np.asarray(preds, dtype=np.float64).ravel()
    if t.shape != p.shape:
        raise EvaluationError("targets and predictions must have equal length")
    if t.size == 0:
        raise EvaluationError("cannot average an empty error vector")
    return float(np.mean(np.abs(t - p)))
