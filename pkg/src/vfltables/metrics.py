"""Evaluation metrics for ensemble scores."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

from .sharing import ShapeError


def rmse(pred, y) -> float:
    pred, y = np.asarray(pred, np.float64), np.asarray(y, np.float64)
    if pred.shape != y.shape:
        raise ShapeError(f"{pred.shape} predictions for {y.shape} labels")
    return float(np.sqrt(np.mean((pred - y) ** 2)))


def accuracy(scores, y) -> float:
    """Class 1 iff the additive score is >= 0 (sigmoid >= 0.5)."""
    scores, y = np.asarray(scores, np.float64), np.asarray(y, np.float64)
    if scores.shape != y.shape:
        raise ShapeError(f"{scores.shape} scores for {y.shape} labels")
    return float(np.mean((scores >= 0).astype(np.float64) == y))


def auc(scores, y) -> float:
    """Mann-Whitney rank statistic; tied pairs count one half."""
    scores, y = np.asarray(scores, np.float64), np.asarray(y, np.float64)
    if scores.shape != y.shape:
        raise ShapeError(f"{scores.shape} scores for {y.shape} labels")
    pos = y == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = rankdata(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def evaluate(predictions, labels, task: str) -> dict[str, float]:
    if task == "regression":
        return {"rmse": rmse(predictions, labels)}
    if task == "classification":
        return {"acc": accuracy(predictions, labels), "auc": auc(predictions, labels)}
    raise ValueError(f"unknown task {task!r}")
