"""Ranking metrics."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

from .errors import EvaluationError


def _prepare(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.shape != labels.shape:
        raise EvaluationError(f"{scores.size} scores but {labels.size} labels")
    if not np.all(np.isfinite(scores)):
        raise EvaluationError("scores must be finite")
    return scores, labels.astype(bool)


def average_precision(scores, labels) -> float:
    """Sum over ranks of precision@k times the recall increment at k.

    Scores are ranked descending; ties keep input order.
    """
    scores, labels = _prepare(scores, labels)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise EvaluationError("average precision is undefined without positive labels")
    order = np.argsort(-scores, kind="stable")
    hits = labels[order]
    precision = np.cumsum(hits) / np.arange(1, len(hits) + 1)
    return float(np.sum(precision[hits]) / n_pos)


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC; tied scores count one half."""
    scores, labels = _prepare(scores, labels)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError("ROC AUC needs both classes present")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))
